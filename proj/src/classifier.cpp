#include <algorithm>
#include <cmath>
#include <numeric>

#include "flamewatch/classifier.hpp"
#include "flamewatch/error.hpp"

namespace flamewatch {

namespace {

Tensor make_tensor(std::string name, std::vector<std::size_t> shape) {
    Tensor t;
    t.name = std::move(name);
    t.shape = std::move(shape);
    const std::size_t n = std::accumulate(t.shape.begin(), t.shape.end(), std::size_t{1}, std::multiplies<>());
    t.data.assign(n, 0.0);
    return t;
}

void init_uniform(Tensor& t, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& x : t.data) x = rng.uniform(-bound, bound);
}

TensorSet zero_copy(const TensorSet& params) {
    TensorSet out;
    for (std::size_t i = 0; i < kNumParams; ++i) {
        out[i].name = params[i].name;
        out[i].shape = params[i].shape;
        out[i].data.assign(params[i].data.size(), 0.0);
    }
    return out;
}

}  // namespace

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : params) n += t.data.size();
    return n;
}

std::size_t Model::trainable_parameter_count() const {
    const std::size_t n = parameter_count();
    return config.fine_tune_embeddings ? n : n - params[kEmbedding].data.size();
}

Model build_model(const ModelConfig& config, const EmbeddingMatrix& embeddings) {
    config.validate();
    if (embeddings.dim != static_cast<std::size_t>(config.embed_dim))
        throw InputError("embedding dimension " + std::to_string(embeddings.dim) + " does not match embed_dim " +
                         std::to_string(config.embed_dim));
    Model model;
    model.config = config;
    model.vocab = embeddings.words;
    for (std::size_t i = 0; i < model.vocab.size(); ++i) model.ids.emplace(model.vocab[i], static_cast<int>(i) + 2);

    const std::size_t e = static_cast<std::size_t>(config.embed_dim);
    auto& p = model.params;
    p[kEmbedding] = make_tensor("embedding", {model.vocab.size() + 2, e});
    for (std::size_t i = 0; i < model.vocab.size(); ++i) {
        const auto v = lookup(embeddings, model.vocab[i], LookupMode::Subword);
        std::copy(v.begin(), v.end(), p[kEmbedding].data.begin() + static_cast<std::ptrdiff_t>((i + 2) * e));
    }

    Rng rng(config.seed);
    std::size_t cin = e;
    static constexpr const char* kConvNames[] = {"conv1", "conv2", "conv3"};
    for (int l = 0; l < 3; ++l) {
        const auto f = static_cast<std::size_t>(config.conv[l].filters);
        const auto k = static_cast<std::size_t>(config.conv[l].kernel);
        auto& w = p[kConv0W + 2 * l];
        w = make_tensor(std::string(kConvNames[l]) + ".weight", {f, k, cin});
        init_uniform(w, k * cin, rng);
        p[kConv0B + 2 * l] = make_tensor(std::string(kConvNames[l]) + ".bias", {f});
        cin = f;
    }

    const auto h = static_cast<std::size_t>(config.lstm_hidden);
    const char* dir_names[] = {"lstm_fwd", "lstm_bwd"};
    for (int d = 0; d < 2; ++d) {
        const std::size_t base = d == 0 ? kLstmFwdWx : kLstmBwdWx;
        const std::string prefix = dir_names[d];
        p[base] = make_tensor(prefix + ".wx", {4 * h, cin});
        p[base + 1] = make_tensor(prefix + ".wh", {4 * h, h});
        p[base + 2] = make_tensor(prefix + ".bias", {4 * h});
        init_uniform(p[base], cin + h, rng);
        init_uniform(p[base + 1], cin + h, rng);
        std::fill(p[base + 2].data.begin() + static_cast<std::ptrdiff_t>(h),
                  p[base + 2].data.begin() + static_cast<std::ptrdiff_t>(2 * h), 1.0);
    }

    const auto d1 = static_cast<std::size_t>(config.dense[0]);
    const auto d2 = static_cast<std::size_t>(config.dense[1]);
    p[kDense1W] = make_tensor("dense1.weight", {d1, 2 * h});
    p[kDense1B] = make_tensor("dense1.bias", {d1});
    init_uniform(p[kDense1W], 2 * h, rng);
    p[kDense2W] = make_tensor("dense2.weight", {d2, d1});
    p[kDense2B] = make_tensor("dense2.bias", {d2});
    init_uniform(p[kDense2W], d1, rng);
    p[kOutW] = make_tensor("output.weight", {kNumClasses, d2});
    p[kOutB] = make_tensor("output.bias", {kNumClasses});
    init_uniform(p[kOutW], d2, rng);

    model.adam.m = zero_copy(p);
    model.adam.v = zero_copy(p);
    return model;
}

Sequence encode(const Model& model, std::span<const std::string> tokens, const EmbeddingMatrix* embeddings) {
    if (tokens.size() > static_cast<std::size_t>(model.config.max_tokens))
        throw InputError("sequence longer than max_tokens");
    const bool compose = embeddings && embeddings->subwords && embeddings->dim == static_cast<std::size_t>(model.config.embed_dim);
    Sequence s;
    s.ids.reserve(tokens.size());
    for (const auto& tok : tokens) {
        auto it = model.ids.find(tok);
        if (it != model.ids.end()) {
            s.ids.push_back(it->second);
        } else if (compose) {
            const auto v = lookup(*embeddings, tok, LookupMode::Subword);
            s.ids.push_back(kComposedId);
            s.composed.insert(s.composed.end(), v.begin(), v.end());
        } else {
            s.ids.push_back(kUnkId);
        }
    }
    return s;
}

Batch make_batch(const Model& model, std::span<const Sequence> sequences, std::span<const int> labels) {
    if (!labels.empty() && labels.size() != sequences.size())
        throw InputError("label count does not match sequence count");
    Batch b;
    b.size = sequences.size();
    b.max_tokens = static_cast<std::size_t>(model.config.max_tokens);
    b.ids.assign(b.size * b.max_tokens, kPadId);
    b.lengths.resize(b.size);
    b.labels.assign(b.size * kNumClasses, 0.0);
    b.composed.resize(b.size);
    for (std::size_t i = 0; i < b.size; ++i) {
        const auto& s = sequences[i];
        if (s.ids.empty()) throw InputError("empty sequence in batch");
        if (s.ids.size() > b.max_tokens) throw InputError("sequence longer than max_tokens");
        std::copy(s.ids.begin(), s.ids.end(), b.ids.begin() + static_cast<std::ptrdiff_t>(i * b.max_tokens));
        b.lengths[i] = s.ids.size();
        b.composed[i] = s.composed;
        if (!labels.empty()) {
            if (labels[i] < 0 || labels[i] >= static_cast<int>(kNumClasses))
                throw InputError("label out of range: " + std::to_string(labels[i]));
            b.labels[i * kNumClasses + static_cast<std::size_t>(labels[i])] = 1.0;
        }
    }
    return b;
}

void adam_step(Model& model, const Gradients& gradients, const AdamOptions& o) {
    auto& st = model.adam;
    ++st.step;
    const double t = static_cast<double>(st.step);
    const double c1 = 1.0 - std::pow(o.beta1, t);
    const double c2 = 1.0 - std::pow(o.beta2, t);
    for (std::size_t i = 0; i < kNumParams; ++i) {
        if (i == kEmbedding && !model.config.fine_tune_embeddings) continue;
        auto& w = model.params[i].data;
        auto& m = st.m[i].data;
        auto& v = st.v[i].data;
        const auto& g = gradients.grads[i].data;
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * g[j];
            v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * g[j] * g[j];
            w[j] -= o.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + o.epsilon);
        }
    }
}

namespace {

std::vector<std::span<const std::string>> chunks_of(std::span<const std::string> tokens, std::size_t width) {
    std::vector<std::span<const std::string>> out;
    for (std::size_t i = 0; i < tokens.size(); i += width)
        out.push_back(tokens.subspan(i, std::min(width, tokens.size() - i)));
    return out;
}

struct SetMetrics {
    double loss = 0.0;
    double accuracy = 0.0;
};

SetMetrics measure(const Model& model, std::span<const Example> examples, std::span<const std::size_t> idx) {
    SetMetrics m;
    if (idx.empty()) return m;
    std::size_t correct = 0;
    for (std::size_t i : idx) {
        const auto& ex = examples[i];
        const auto p = forward(model, ex.sequence);
        m.loss -= std::log(std::clamp(p[static_cast<std::size_t>(ex.label)], 1e-12, 1.0));
        if (label_code(argmax_label(p)) == ex.label) ++correct;
    }
    m.loss /= static_cast<double>(idx.size());
    m.accuracy = static_cast<double>(correct) / static_cast<double>(idx.size());
    return m;
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace

std::vector<Example> make_examples(const Model& model, std::span<const LabeledComment> data,
                                   const EmbeddingMatrix* embeddings) {
    std::vector<Example> out;
    const auto width = static_cast<std::size_t>(model.config.max_tokens);
    for (const auto& lc : data) {
        for (const auto& chunk : chunks_of(lc.comment.tokens, width))
            out.push_back({encode(model, chunk, embeddings), label_code(lc.label)});
    }
    return out;
}

nlohmann::json to_json(const TrainReport& r) {
    nlohmann::json epochs = nlohmann::json::array();
    for (std::size_t i = 0; i < r.epochs.size(); ++i) {
        const auto& e = r.epochs[i];
        nlohmann::json j = {{"epoch", i + 1}, {"train_loss", e.train_loss}, {"train_accuracy", e.train_accuracy}};
        j["val_loss"] = e.val_loss ? nlohmann::json(*e.val_loss) : nlohmann::json(nullptr);
        j["val_accuracy"] = e.val_accuracy ? nlohmann::json(*e.val_accuracy) : nlohmann::json(nullptr);
        epochs.push_back(std::move(j));
    }
    return {{"epochs", epochs},
            {"chosen_epoch", r.chosen_epoch},
            {"early_stopped", r.early_stopped},
            {"train_size", r.train_size},
            {"val_size", r.val_size}};
}

TrainReport train(Model& model, std::span<const Example> examples, const TrainOptions& options) {
    if (options.epochs < 1) throw InputError("epochs must be >= 1");
    if (options.batch_size < 1) throw InputError("batch size must be >= 1");
    if (!(options.val_split >= 0.0 && options.val_split < 1.0)) throw InputError("val_split must be in [0, 1)");
    for (const auto& ex : examples) {
        if (ex.label < 0 || ex.label >= static_cast<int>(kNumClasses))
            throw InputError("label out of range: " + std::to_string(ex.label));
    }

    Rng rng(options.seed);
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, rng);
    const auto n_val = static_cast<std::size_t>(std::floor(options.val_split * static_cast<double>(examples.size())));
    std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> tr(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

    std::array<std::size_t, kNumClasses> per_class{};
    for (std::size_t i : tr) ++per_class[static_cast<std::size_t>(examples[i].label)];
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        if (per_class[c] < 2)
            throw InputError("training split has " + std::to_string(per_class[c]) + " example(s) of class " +
                             std::string(label_name(label_from_code(static_cast<int>(c)))) + ", need at least 2");
    }

    TrainReport report;
    report.train_size = tr.size();
    report.val_size = val.size();
    report.early_stopped = !val.empty();

    Rng dropout_rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
    const AdamOptions adam{options.lr};
    TensorSet best = model.params;
    AdamState best_adam = model.adam;
    double best_val = 0.0;

    std::vector<Sequence> seqs;
    std::vector<int> labels;
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        shuffle(tr, rng);
        for (std::size_t start = 0; start < tr.size(); start += options.batch_size) {
            const std::size_t end = std::min(tr.size(), start + options.batch_size);
            seqs.clear();
            labels.clear();
            for (std::size_t i = start; i < end; ++i) {
                seqs.push_back(examples[tr[i]].sequence);
                labels.push_back(examples[tr[i]].label);
            }
            const Batch batch = make_batch(model, seqs, labels);
            adam_step(model, backward(model, batch, &dropout_rng), adam);
        }

        EpochMetrics em;
        const auto tm = measure(model, examples, tr);
        em.train_loss = tm.loss;
        em.train_accuracy = tm.accuracy;
        if (!val.empty()) {
            const auto vm = measure(model, examples, val);
            em.val_loss = vm.loss;
            em.val_accuracy = vm.accuracy;
            if (report.chosen_epoch == 0 || vm.loss < best_val) {
                best_val = vm.loss;
                best = model.params;
                best_adam = model.adam;
                report.chosen_epoch = static_cast<std::size_t>(epoch) + 1;
            }
        }
        report.epochs.push_back(em);
        if (options.on_epoch) options.on_epoch(model, em);
    }
    if (val.empty()) {
        report.chosen_epoch = report.epochs.size();
    } else {
        model.params = std::move(best);
        model.adam = std::move(best_adam);
    }
    return report;
}

SentimentLabel argmax_label(const Probabilities& p) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < p.size(); ++c)
        if (p[c] > p[best]) best = c;
    return label_from_code(static_cast<int>(best));
}

Prediction predict_comment(const Model& model, std::span<const std::string> tokens,
                           const EmbeddingMatrix* embeddings) {
    if (tokens.empty()) throw InputError("cannot predict an empty comment");
    const auto chunks = chunks_of(tokens, static_cast<std::size_t>(model.config.max_tokens));
    Prediction pred;
    pred.chunks = chunks.size();
    if (chunks.size() == 1) {
        pred.probabilities = forward(model, encode(model, chunks[0], embeddings));
    } else {
        for (const auto& chunk : chunks) {
            const auto p = forward(model, encode(model, chunk, embeddings));
            for (std::size_t c = 0; c < kNumClasses; ++c) pred.probabilities[c] += p[c];
        }
        for (auto& v : pred.probabilities) v /= static_cast<double>(chunks.size());
    }
    pred.label = argmax_label(pred.probabilities);
    return pred;
}

Evaluation evaluate(const Model& model, std::span<const LabeledComment> data, const EmbeddingMatrix* embeddings) {
    if (data.empty()) throw InputError("cannot evaluate on an empty set");
    Evaluation ev;
    std::vector<int> actual;
    std::size_t correct = 0;
    for (const auto& lc : data) {
        const int p = label_code(predict_comment(model, lc.comment.tokens, embeddings).label);
        const int a = label_code(lc.label);
        ev.predicted.push_back(p);
        actual.push_back(a);
        if (p == a) ++correct;
    }
    std::vector<std::string> names;
    for (std::size_t c = 0; c < kNumClasses; ++c)
        names.emplace_back(label_name(label_from_code(static_cast<int>(c))));
    ev.confusion = confusion(ev.predicted, actual, kNumClasses, names);
    ev.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    return ev;
}

}  // namespace flamewatch
