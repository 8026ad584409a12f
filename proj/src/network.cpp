#include <algorithm>
#include <cmath>

#include "flamewatch/classifier.hpp"
#include "flamewatch/error.hpp"

namespace flamewatch {

void ModelConfig::validate() const {
    if (max_tokens < 1) throw InputError("max_tokens must be >= 1");
    if (embed_dim < 1) throw InputError("embed_dim must be >= 1");
    for (const auto& c : conv) {
        if (c.filters < 1) throw InputError("conv filters must be >= 1");
        if (c.kernel < 1 || c.kernel > max_tokens) throw InputError("conv kernel width must be in [1, max_tokens]");
    }
    if (pool < 1) throw InputError("pool width must be >= 1");
    if (lengths().back() < 1) throw InputError("max_tokens too small for three pooling stages");
    if (lstm_hidden < 1) throw InputError("lstm_hidden must be >= 1");
    if (dense[0] < 1 || dense[1] < 1) throw InputError("dense sizes must be >= 1");
    if (!(dropout_lstm >= 0.0 && dropout_lstm < 1.0) || !(dropout_dense >= 0.0 && dropout_dense < 1.0))
        throw InputError("dropout rates must be in [0, 1)");
    if (classes != static_cast<int>(kNumClasses)) throw InputError("classes must be 5");
}

std::array<int, 4> ModelConfig::lengths() const {
    std::array<int, 4> t{};
    t[0] = max_tokens;
    for (int l = 0; l < 3; ++l) t[l + 1] = pool > 0 ? t[l] / pool : 0;
    return t;
}

nlohmann::json to_json(const ModelConfig& c) {
    nlohmann::json conv = nlohmann::json::array();
    for (const auto& s : c.conv) conv.push_back({{"filters", s.filters}, {"kernel", s.kernel}});
    return {{"max_tokens", c.max_tokens},     {"embed_dim", c.embed_dim},
            {"conv", conv},                   {"pool", c.pool},
            {"lstm_hidden", c.lstm_hidden},   {"dense", c.dense},
            {"dropout_lstm", c.dropout_lstm}, {"dropout_dense", c.dropout_dense},
            {"classes", c.classes},           {"seed", c.seed},
            {"fine_tune_embeddings", c.fine_tune_embeddings}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    try {
        ModelConfig c;
        c.max_tokens = j.at("max_tokens").get<int>();
        c.embed_dim = j.at("embed_dim").get<int>();
        const auto& conv = j.at("conv");
        if (!conv.is_array() || conv.size() != 3) throw InputError("config needs exactly 3 conv layers");
        for (std::size_t i = 0; i < 3; ++i) {
            c.conv[i].filters = conv[i].at("filters").get<int>();
            c.conv[i].kernel = conv[i].at("kernel").get<int>();
        }
        c.pool = j.at("pool").get<int>();
        c.lstm_hidden = j.at("lstm_hidden").get<int>();
        c.dense = j.at("dense").get<std::array<int, 2>>();
        c.dropout_lstm = j.at("dropout_lstm").get<double>();
        c.dropout_dense = j.at("dropout_dense").get<double>();
        c.classes = j.at("classes").get<int>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.fine_tune_embeddings = j.at("fine_tune_embeddings").get<bool>();
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("bad model config: ") + e.what());
    }
}

namespace {

struct Dims {
    std::array<std::size_t, 4> len{};       // sequence length entering conv l / LSTM
    std::array<std::size_t, 4> channels{};  // channels entering conv l / LSTM
    std::array<std::size_t, 3> kernel{};
    std::size_t pool = 1;
    std::size_t hidden = 0;
    std::size_t d1 = 0;
    std::size_t d2 = 0;
    std::size_t classes = kNumClasses;
};

Dims dims_of(const ModelConfig& c) {
    Dims d;
    const auto t = c.lengths();
    for (int i = 0; i < 4; ++i) d.len[i] = static_cast<std::size_t>(t[i]);
    d.channels[0] = static_cast<std::size_t>(c.embed_dim);
    for (int l = 0; l < 3; ++l) {
        d.channels[l + 1] = static_cast<std::size_t>(c.conv[l].filters);
        d.kernel[l] = static_cast<std::size_t>(c.conv[l].kernel);
    }
    d.pool = static_cast<std::size_t>(c.pool);
    d.hidden = static_cast<std::size_t>(c.lstm_hidden);
    d.d1 = static_cast<std::size_t>(c.dense[0]);
    d.d2 = static_cast<std::size_t>(c.dense[1]);
    return d;
}

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

void require_finite(const std::vector<double>& v, const char* layer) {
    for (double x : v)
        if (!std::isfinite(x)) throw NumericError(std::string("non-finite value in layer ") + layer);
}

struct ConvCache {
    std::vector<double> input;  // len x channels_in
    std::vector<double> pre;    // len x filters
    std::vector<std::size_t> argmax;  // pooled_len x filters
    std::size_t valid = 0;
};

struct LstmCache {
    std::vector<double> gates;   // steps x 4H, activated, in processing order
    std::vector<double> cell;    // steps x H
    std::vector<double> hidden;  // steps x H
};

struct ExampleCache {
    std::array<ConvCache, 3> conv;
    std::vector<double> lstm_in;  // len[3] x channels[3]
    std::size_t steps = 0;
    LstmCache fwd, bwd;
    std::vector<double> merged;     // 2H before dropout
    std::vector<double> mask1;      // dropout multipliers (already scaled), empty if off
    std::vector<double> merged_dropped;
    std::vector<double> dense1;
    std::vector<double> mask2;
    std::vector<double> dense1_dropped;
    std::vector<double> dense2;
    Probabilities probs{};
};

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

void conv_forward(const Tensor& w, const Tensor& b, const Dims& d, int layer, ConvCache& cache,
                  std::vector<double>& pooled, std::size_t& pooled_valid) {
    const std::size_t len = d.len[layer];
    const std::size_t cin = d.channels[layer];
    const std::size_t filters = d.channels[layer + 1];
    const std::size_t k = d.kernel[layer];
    const std::size_t left = (k - 1) / 2;
    cache.pre.assign(len * filters, 0.0);
    for (std::size_t t = 0; t < cache.valid; ++t) {
        for (std::size_t f = 0; f < filters; ++f) {
            double s = b.data[f];
            const double* wf = w.data.data() + f * k * cin;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const long src = static_cast<long>(t + kk) - static_cast<long>(left);
                if (src < 0 || src >= static_cast<long>(len)) continue;
                const double* x = cache.input.data() + static_cast<std::size_t>(src) * cin;
                const double* wk = wf + kk * cin;
                for (std::size_t c = 0; c < cin; ++c) s += wk[c] * x[c];
            }
            cache.pre[t * filters + f] = s;
        }
    }
    const std::size_t out_len = d.len[layer + 1];
    pooled.assign(out_len * filters, 0.0);
    cache.argmax.assign(out_len * filters, 0);
    for (std::size_t s = 0; s < out_len; ++s) {
        for (std::size_t f = 0; f < filters; ++f) {
            std::size_t best = s * d.pool;
            double best_v = -1.0;
            for (std::size_t t = s * d.pool; t < (s + 1) * d.pool; ++t) {
                // masked positions hold ReLU output 0
                const double v = t < cache.valid ? std::max(0.0, cache.pre[t * filters + f]) : 0.0;
                if (v > best_v) {
                    best_v = v;
                    best = t;
                }
            }
            pooled[s * filters + f] = best_v;
            cache.argmax[s * filters + f] = best;
        }
    }
    pooled_valid = std::min(out_len, ceil_div(cache.valid, d.pool));
}

void lstm_forward(const Tensor& wx, const Tensor& wh, const Tensor& b, const std::vector<double>& input,
                  std::size_t cin, std::size_t steps, std::size_t hidden, bool reverse, LstmCache& cache) {
    const std::size_t g4 = 4 * hidden;
    cache.gates.assign(steps * g4, 0.0);
    cache.cell.assign(steps * hidden, 0.0);
    cache.hidden.assign(steps * hidden, 0.0);
    std::vector<double> z(g4);
    for (std::size_t n = 0; n < steps; ++n) {
        const std::size_t t = reverse ? steps - 1 - n : n;
        const double* x = input.data() + t * cin;
        const double* h_prev = n > 0 ? cache.hidden.data() + (n - 1) * hidden : nullptr;
        const double* c_prev = n > 0 ? cache.cell.data() + (n - 1) * hidden : nullptr;
        for (std::size_t r = 0; r < g4; ++r) {
            double s = b.data[r];
            const double* wxr = wx.data.data() + r * cin;
            for (std::size_t c = 0; c < cin; ++c) s += wxr[c] * x[c];
            if (h_prev) {
                const double* whr = wh.data.data() + r * hidden;
                for (std::size_t c = 0; c < hidden; ++c) s += whr[c] * h_prev[c];
            }
            z[r] = s;
        }
        double* g = cache.gates.data() + n * g4;
        for (std::size_t j = 0; j < hidden; ++j) {
            g[j] = sigmoid(z[j]);                               // input
            g[hidden + j] = sigmoid(z[hidden + j]);             // forget
            g[2 * hidden + j] = std::tanh(z[2 * hidden + j]);   // candidate
            g[3 * hidden + j] = sigmoid(z[3 * hidden + j]);     // output
            const double c = g[hidden + j] * (c_prev ? c_prev[j] : 0.0) + g[j] * g[2 * hidden + j];
            cache.cell[n * hidden + j] = c;
            cache.hidden[n * hidden + j] = g[3 * hidden + j] * std::tanh(c);
        }
    }
}

void dense_forward(const Tensor& w, const Tensor& b, const std::vector<double>& in, std::vector<double>& out) {
    const std::size_t n_out = b.data.size();
    const std::size_t n_in = in.size();
    out.assign(n_out, 0.0);
    for (std::size_t o = 0; o < n_out; ++o) {
        double s = b.data[o];
        const double* wr = w.data.data() + o * n_in;
        for (std::size_t i = 0; i < n_in; ++i) s += wr[i] * in[i];
        out[o] = s;
    }
}

std::vector<double> dropout_mask(std::size_t n, double rate, Rng* rng) {
    if (!rng || rate <= 0.0) return {};
    std::vector<double> mask(n);
    const double keep = 1.0 - rate;
    for (auto& m : mask) m = rng->uniform() < keep ? 1.0 / keep : 0.0;
    return mask;
}

std::vector<double> apply_mask(const std::vector<double>& v, const std::vector<double>& mask) {
    if (mask.empty()) return v;
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * mask[i];
    return out;
}

void fill_input(const Model& model, const Dims& d, std::span<const int> ids, std::size_t length,
                const std::vector<double>& composed, std::vector<double>& x0) {
    const std::size_t e = d.channels[0];
    x0.assign(d.len[0] * e, 0.0);
    const auto& table = model.params[kEmbedding].data;
    std::size_t next_composed = 0;
    for (std::size_t t = 0; t < length; ++t) {
        const int id = ids[t];
        const double* src = nullptr;
        if (id == kComposedId) {
            if ((next_composed + 1) * e > composed.size()) throw InputError("missing composed vector for OOV token");
            src = composed.data() + next_composed * e;
            ++next_composed;
        } else {
            if (id < 0 || static_cast<std::size_t>(id) * e >= table.size()) throw InputError("token id out of range");
            src = table.data() + static_cast<std::size_t>(id) * e;
        }
        std::copy(src, src + e, x0.begin() + static_cast<std::ptrdiff_t>(t * e));
    }
}

Probabilities forward_example(const Model& model, const Dims& d, std::span<const int> ids, std::size_t length,
                              const std::vector<double>& composed, Rng* dropout_rng, ExampleCache& cache) {
    const auto& p = model.params;
    fill_input(model, d, ids, length, composed, cache.conv[0].input);
    cache.conv[0].valid = length;
    static constexpr const char* kConvNames[] = {"conv1", "conv2", "conv3"};
    for (int l = 0; l < 3; ++l) {
        std::vector<double> pooled;
        std::size_t pooled_valid = 0;
        conv_forward(p[kConv0W + 2 * l], p[kConv0B + 2 * l], d, l, cache.conv[l], pooled, pooled_valid);
        require_finite(pooled, kConvNames[l]);
        if (l < 2) {
            cache.conv[l + 1].input = std::move(pooled);
            cache.conv[l + 1].valid = pooled_valid;
        } else {
            cache.lstm_in = std::move(pooled);
            cache.steps = pooled_valid;
        }
    }

    const std::size_t h = d.hidden;
    lstm_forward(p[kLstmFwdWx], p[kLstmFwdWh], p[kLstmFwdB], cache.lstm_in, d.channels[3], cache.steps, h, false,
                 cache.fwd);
    lstm_forward(p[kLstmBwdWx], p[kLstmBwdWh], p[kLstmBwdB], cache.lstm_in, d.channels[3], cache.steps, h, true,
                 cache.bwd);
    cache.merged.assign(2 * h, 0.0);
    for (std::size_t j = 0; j < h; ++j) {
        cache.merged[j] = cache.fwd.hidden[(cache.steps - 1) * h + j];
        cache.merged[h + j] = cache.bwd.hidden[(cache.steps - 1) * h + j];
    }
    require_finite(cache.merged, "bilstm");

    cache.mask1 = dropout_mask(cache.merged.size(), model.config.dropout_lstm, dropout_rng);
    cache.merged_dropped = apply_mask(cache.merged, cache.mask1);

    dense_forward(p[kDense1W], p[kDense1B], cache.merged_dropped, cache.dense1);
    for (auto& v : cache.dense1) v = sigmoid(v);
    require_finite(cache.dense1, "dense1");
    cache.mask2 = dropout_mask(cache.dense1.size(), model.config.dropout_dense, dropout_rng);
    cache.dense1_dropped = apply_mask(cache.dense1, cache.mask2);

    dense_forward(p[kDense2W], p[kDense2B], cache.dense1_dropped, cache.dense2);
    for (auto& v : cache.dense2) v = sigmoid(v);
    require_finite(cache.dense2, "dense2");

    std::vector<double> logits;
    dense_forward(p[kOutW], p[kOutB], cache.dense2, logits);
    require_finite(logits, "output");
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        cache.probs[c] = std::exp(logits[c] - mx);
        z += cache.probs[c];
    }
    for (auto& v : cache.probs) v /= z;
    return cache.probs;
}

void dense_backward(const Tensor& w, const std::vector<double>& in, const std::vector<double>& dz, Tensor& dw,
                    Tensor& db, std::vector<double>* din) {
    const std::size_t n_out = dz.size();
    const std::size_t n_in = in.size();
    if (din) din->assign(n_in, 0.0);
    for (std::size_t o = 0; o < n_out; ++o) {
        const double g = dz[o];
        db.data[o] += g;
        double* dwr = dw.data.data() + o * n_in;
        const double* wr = w.data.data() + o * n_in;
        for (std::size_t i = 0; i < n_in; ++i) {
            dwr[i] += g * in[i];
            if (din) (*din)[i] += g * wr[i];
        }
    }
}

void lstm_backward(const Tensor& wx, const Tensor& wh, const std::vector<double>& input, std::size_t cin,
                   std::size_t steps, std::size_t hidden, bool reverse, const LstmCache& cache,
                   const double* dh_final, Tensor& dwx, Tensor& dwh, Tensor& db, std::vector<double>& dinput) {
    const std::size_t g4 = 4 * hidden;
    std::vector<double> dh(dh_final, dh_final + hidden);
    std::vector<double> dc(hidden, 0.0);
    std::vector<double> dz(g4);
    for (std::size_t n = steps; n-- > 0;) {
        const std::size_t t = reverse ? steps - 1 - n : n;
        const double* g = cache.gates.data() + n * g4;
        const double* c = cache.cell.data() + n * hidden;
        const double* c_prev = n > 0 ? cache.cell.data() + (n - 1) * hidden : nullptr;
        const double* h_prev = n > 0 ? cache.hidden.data() + (n - 1) * hidden : nullptr;
        for (std::size_t j = 0; j < hidden; ++j) {
            const double i_g = g[j], f_g = g[hidden + j], c_g = g[2 * hidden + j], o_g = g[3 * hidden + j];
            const double tc = std::tanh(c[j]);
            const double d_o = dh[j] * tc;
            const double dcell = dc[j] + dh[j] * o_g * (1.0 - tc * tc);
            const double d_i = dcell * c_g;
            const double d_c = dcell * i_g;
            const double d_f = dcell * (c_prev ? c_prev[j] : 0.0);
            dc[j] = dcell * f_g;
            dz[j] = d_i * i_g * (1.0 - i_g);
            dz[hidden + j] = d_f * f_g * (1.0 - f_g);
            dz[2 * hidden + j] = d_c * (1.0 - c_g * c_g);
            dz[3 * hidden + j] = d_o * o_g * (1.0 - o_g);
        }
        const double* x = input.data() + t * cin;
        double* dx = dinput.data() + t * cin;
        std::fill(dh.begin(), dh.end(), 0.0);
        for (std::size_t r = 0; r < g4; ++r) {
            const double gz = dz[r];
            db.data[r] += gz;
            double* dwxr = dwx.data.data() + r * cin;
            const double* wxr = wx.data.data() + r * cin;
            for (std::size_t k = 0; k < cin; ++k) {
                dwxr[k] += gz * x[k];
                dx[k] += gz * wxr[k];
            }
            if (h_prev) {
                double* dwhr = dwh.data.data() + r * hidden;
                const double* whr = wh.data.data() + r * hidden;
                for (std::size_t k = 0; k < hidden; ++k) {
                    dwhr[k] += gz * h_prev[k];
                    dh[k] += gz * whr[k];
                }
            }
        }
    }
}

void conv_backward(const Tensor& w, const Dims& d, int layer, const ConvCache& cache,
                   const std::vector<double>& dpooled, Tensor& dw, Tensor& db, std::vector<double>* dinput) {
    const std::size_t len = d.len[layer];
    const std::size_t cin = d.channels[layer];
    const std::size_t filters = d.channels[layer + 1];
    const std::size_t k = d.kernel[layer];
    const std::size_t left = (k - 1) / 2;
    const std::size_t out_len = d.len[layer + 1];
    std::vector<double> dpre(len * filters, 0.0);
    for (std::size_t s = 0; s < out_len; ++s) {
        for (std::size_t f = 0; f < filters; ++f) {
            const std::size_t t = cache.argmax[s * filters + f];
            if (t < cache.valid && cache.pre[t * filters + f] > 0.0) dpre[t * filters + f] += dpooled[s * filters + f];
        }
    }
    if (dinput) dinput->assign(len * cin, 0.0);
    for (std::size_t t = 0; t < cache.valid; ++t) {
        for (std::size_t f = 0; f < filters; ++f) {
            const double g = dpre[t * filters + f];
            if (g == 0.0) continue;
            db.data[f] += g;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const long src = static_cast<long>(t + kk) - static_cast<long>(left);
                if (src < 0 || src >= static_cast<long>(len)) continue;
                const std::size_t off = f * k * cin + kk * cin;
                const double* x = cache.input.data() + static_cast<std::size_t>(src) * cin;
                double* dwk = dw.data.data() + off;
                for (std::size_t c = 0; c < cin; ++c) dwk[c] += g * x[c];
                if (dinput) {
                    const double* wk = w.data.data() + off;
                    double* dx = dinput->data() + static_cast<std::size_t>(src) * cin;
                    for (std::size_t c = 0; c < cin; ++c) dx[c] += g * wk[c];
                }
            }
        }
    }
}

void backward_example(const Model& model, const Dims& d, const ExampleCache& cache, std::span<const int> ids,
                      std::size_t length, const double* dlogits, TensorSet& g) {
    const auto& p = model.params;
    dense_backward(p[kOutW], cache.dense2, std::vector<double>(dlogits, dlogits + kNumClasses), g[kOutW], g[kOutB],
                   nullptr);
    std::vector<double> dd2(d.d2, 0.0);
    for (std::size_t o = 0; o < kNumClasses; ++o)
        for (std::size_t i = 0; i < d.d2; ++i) dd2[i] += dlogits[o] * p[kOutW].data[o * d.d2 + i];
    for (std::size_t i = 0; i < d.d2; ++i) dd2[i] *= cache.dense2[i] * (1.0 - cache.dense2[i]);

    std::vector<double> dd1;
    dense_backward(p[kDense2W], cache.dense1_dropped, dd2, g[kDense2W], g[kDense2B], &dd1);
    for (std::size_t i = 0; i < d.d1; ++i) {
        if (!cache.mask2.empty()) dd1[i] *= cache.mask2[i];
        dd1[i] *= cache.dense1[i] * (1.0 - cache.dense1[i]);
    }

    std::vector<double> dmerged;
    dense_backward(p[kDense1W], cache.merged_dropped, dd1, g[kDense1W], g[kDense1B], &dmerged);
    if (!cache.mask1.empty())
        for (std::size_t i = 0; i < dmerged.size(); ++i) dmerged[i] *= cache.mask1[i];

    const std::size_t h = d.hidden;
    std::vector<double> dlstm_in(d.len[3] * d.channels[3], 0.0);
    lstm_backward(p[kLstmFwdWx], p[kLstmFwdWh], cache.lstm_in, d.channels[3], cache.steps, h, false, cache.fwd,
                  dmerged.data(), g[kLstmFwdWx], g[kLstmFwdWh], g[kLstmFwdB], dlstm_in);
    lstm_backward(p[kLstmBwdWx], p[kLstmBwdWh], cache.lstm_in, d.channels[3], cache.steps, h, true, cache.bwd,
                  dmerged.data() + h, g[kLstmBwdWx], g[kLstmBwdWh], g[kLstmBwdB], dlstm_in);

    std::vector<double> dpooled = std::move(dlstm_in);
    const bool need_input_grad = model.config.fine_tune_embeddings;
    for (int l = 2; l >= 0; --l) {
        std::vector<double> dinput;
        const bool want = l > 0 || need_input_grad;
        conv_backward(p[kConv0W + 2 * l], d, l, cache.conv[l], dpooled, g[kConv0W + 2 * l], g[kConv0B + 2 * l],
                      want ? &dinput : nullptr);
        dpooled = std::move(dinput);
    }
    if (need_input_grad) {
        const std::size_t e = d.channels[0];
        for (std::size_t t = 0; t < length; ++t) {
            const int id = ids[t];
            if (id <= kPadId) continue;  // pad and composed vectors are not table rows
            double* row = g[kEmbedding].data.data() + static_cast<std::size_t>(id) * e;
            for (std::size_t c = 0; c < e; ++c) row[c] += dpooled[t * e + c];
        }
    }
}

TensorSet zeros_like(const TensorSet& params) {
    TensorSet out;
    for (std::size_t i = 0; i < kNumParams; ++i) {
        out[i].name = params[i].name;
        out[i].shape = params[i].shape;
        out[i].data.assign(params[i].data.size(), 0.0);
    }
    return out;
}

std::span<const int> row_ids(const Batch& batch, std::size_t b) {
    return {batch.ids.data() + b * batch.max_tokens, batch.max_tokens};
}

}  // namespace

std::vector<Probabilities> forward(const Model& model, const Batch& batch) {
    const Dims d = dims_of(model.config);
    std::vector<Probabilities> out(batch.size);
    ExampleCache cache;
    for (std::size_t b = 0; b < batch.size; ++b)
        out[b] = forward_example(model, d, row_ids(batch, b), batch.lengths[b], batch.composed[b], nullptr, cache);
    return out;
}

Probabilities forward(const Model& model, const Sequence& sequence) {
    if (sequence.ids.empty()) throw InputError("cannot run the model on an empty sequence");
    if (sequence.ids.size() > static_cast<std::size_t>(model.config.max_tokens))
        throw InputError("sequence longer than max_tokens");
    const Dims d = dims_of(model.config);
    ExampleCache cache;
    return forward_example(model, d, sequence.ids, sequence.ids.size(), sequence.composed, nullptr, cache);
}

double loss(std::span<const Probabilities> probabilities, std::span<const double> one_hot_labels) {
    if (probabilities.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t b = 0; b < probabilities.size(); ++b) {
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            const double y = one_hot_labels[b * kNumClasses + c];
            if (y == 0.0) continue;
            total -= y * std::log(std::clamp(probabilities[b][c], 1e-12, 1.0));
        }
    }
    return total / static_cast<double>(probabilities.size());
}

Gradients backward(const Model& model, const Batch& batch, Rng* dropout_rng) {
    const Dims d = dims_of(model.config);
    Gradients out;
    out.grads = zeros_like(model.params);
    if (batch.size == 0) return out;
    ExampleCache cache;
    const double scale = 1.0 / static_cast<double>(batch.size);
    double total_loss = 0.0;
    for (std::size_t b = 0; b < batch.size; ++b) {
        const auto ids = row_ids(batch, b);
        const Probabilities probs =
            forward_example(model, d, ids, batch.lengths[b], batch.composed[b], dropout_rng, cache);
        std::array<double, kNumClasses> dlogits{};
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            const double y = batch.labels[b * kNumClasses + c];
            dlogits[c] = (probs[c] - y) * scale;
            if (y != 0.0) total_loss -= y * std::log(std::clamp(probs[c], 1e-12, 1.0));
        }
        backward_example(model, d, cache, ids, batch.lengths[b], dlogits.data(), out.grads);
    }
    out.loss = total_loss * scale;
    for (const auto& t : out.grads) {
        for (double x : t.data)
            if (!std::isfinite(x)) throw NumericError("non-finite gradient in tensor " + t.name);
    }
    auto& emb = out.grads[kEmbedding].data;
    std::fill(emb.begin(), emb.begin() + static_cast<std::ptrdiff_t>(d.channels[0]), 0.0);
    return out;
}

}  // namespace flamewatch
