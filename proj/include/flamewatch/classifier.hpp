#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "flamewatch/embedding.hpp"
#include "flamewatch/lexicon.hpp"
#include "flamewatch/metrics.hpp"
#include "flamewatch/random.hpp"

namespace flamewatch {

struct ConvSpec {
    int filters = 64;
    int kernel = 3;
};

/// embedding -> 3 x (conv1d 'same' + ReLU + max-pool) -> Bi-LSTM -> dropout
/// -> dense (sigmoid) -> dropout -> dense (sigmoid) -> softmax
struct ModelConfig {
    int max_tokens = 30;
    int embed_dim = 100;
    std::array<ConvSpec, 3> conv{};
    int pool = 2;
    int lstm_hidden = 64;
    std::array<int, 2> dense{128, 64};
    double dropout_lstm = 0.5;
    double dropout_dense = 0.5;
    int classes = static_cast<int>(kNumClasses);
    std::uint64_t seed = 1;
    bool fine_tune_embeddings = false;

    /// Throws InputError on violated invariants.
    void validate() const;
    /// Sequence length after each pooling stage; back() feeds the LSTM.
    std::array<int, 4> lengths() const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

enum ParamId : std::size_t {
    kEmbedding,
    kConv0W, kConv0B,
    kConv1W, kConv1B,
    kConv2W, kConv2B,
    kLstmFwdWx, kLstmFwdWh, kLstmFwdB,
    kLstmBwdWx, kLstmBwdWh, kLstmBwdB,
    kDense1W, kDense1B,
    kDense2W, kDense2B,
    kOutW, kOutB,
    kNumParams,
};

struct Tensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> data;
};

using TensorSet = std::array<Tensor, kNumParams>;

struct AdamState {
    TensorSet m;
    TensorSet v;
    std::uint64_t step = 0;
};

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
/// Marks a position whose vector is supplied in Sequence::composed (an
/// out-of-vocabulary word composed from subword vectors).
inline constexpr int kComposedId = -1;

struct Model {
    ModelConfig config;
    /// Embedding row i + 2 belongs to vocab[i]; rows 0/1 are pad/unk.
    std::vector<std::string> vocab;
    std::unordered_map<std::string, int> ids;
    TensorSet params;
    AdamState adam;

    std::size_t parameter_count() const;
    std::size_t trainable_parameter_count() const;
};

/// Embedding rows come from `embeddings` (subword composition when it has a
/// subword table); other weights are U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
/// biases zero except the LSTM forget gate (1). Throws InputError when
/// embeddings.dim != config.embed_dim.
Model build_model(const ModelConfig& config, const EmbeddingMatrix& embeddings);

struct Sequence {
    std::vector<int> ids;          // length <= max_tokens, no padding
    std::vector<double> composed;  // embed_dim values per kComposedId position
};

/// Maps tokens (at most max_tokens) to model ids. Unknown tokens get a
/// composed vector when `embeddings` has subwords, otherwise kUnkId.
Sequence encode(const Model& model, std::span<const std::string> tokens, const EmbeddingMatrix* embeddings = nullptr);

struct Batch {
    std::size_t size = 0;
    std::size_t max_tokens = 0;
    std::vector<int> ids;            // size x max_tokens, right-padded with kPadId
    std::vector<std::size_t> lengths;
    std::vector<double> labels;      // size x classes, one-hot
    std::vector<std::vector<double>> composed;

    bool is_pad(std::size_t row, std::size_t t) const { return t >= lengths[row]; }
};

/// Throws InputError for an empty sequence, one longer than max_tokens, or a
/// label out of range.
Batch make_batch(const Model& model, std::span<const Sequence> sequences, std::span<const int> labels);

using Probabilities = std::array<double, kNumClasses>;

/// Inference-mode forward pass (dropout off). Throws NumericError naming the
/// layer that produced a non-finite value.
std::vector<Probabilities> forward(const Model& model, const Batch& batch);
Probabilities forward(const Model& model, const Sequence& sequence);

/// Mean over rows of -sum y log p, p clamped to [1e-12, 1].
double loss(std::span<const Probabilities> probabilities, std::span<const double> one_hot_labels);

struct Gradients {
    TensorSet grads;
    double loss = 0.0;
};

/// Reverse-mode gradients of the mean batch loss. Dropout is sampled from
/// `dropout_rng`; pass nullptr to disable it. The pad row of the embedding
/// always gets zero gradient, and the whole table does unless fine-tuning.
Gradients backward(const Model& model, const Batch& batch, Rng* dropout_rng);

struct AdamOptions {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

void adam_step(Model& model, const Gradients& gradients, const AdamOptions& options = {});

struct Example {
    Sequence sequence;
    int label = 0;
};

/// One example per chunk of at most max_tokens tokens; every chunk carries
/// its comment's label.
std::vector<Example> make_examples(const Model& model, std::span<const LabeledComment> data,
                                   const EmbeddingMatrix* embeddings = nullptr);

struct EpochMetrics {
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    std::optional<double> val_loss;
    std::optional<double> val_accuracy;
};

struct TrainOptions {
    int epochs = 40;
    double val_split = 0.1;
    std::size_t batch_size = 32;
    double lr = 1e-4;
    std::uint64_t seed = 1;
    // Called after each epoch's metrics are measured.
    std::function<void(const Model&, const EpochMetrics&)> on_epoch;
};

struct TrainReport {
    std::vector<EpochMetrics> epochs;
    /// 1-based epoch whose parameters were kept.
    std::size_t chosen_epoch = 0;
    /// False when there was no validation split and the last epoch is kept.
    bool early_stopped = false;
    std::size_t train_size = 0;
    std::size_t val_size = 0;
};

nlohmann::json to_json(const TrainReport& r);

/// Mini-batch Adam training. With a validation split, the parameters of the
/// epoch with minimum validation loss are kept. Train metrics are measured
/// in inference mode after each epoch. Throws InputError when some class has
/// fewer than 2 examples in the training split.
TrainReport train(Model& model, std::span<const Example> examples, const TrainOptions& options);

struct Prediction {
    SentimentLabel label = SentimentLabel::Neutral;
    Probabilities probabilities{};
    std::size_t chunks = 0;
};

/// Comments longer than max_tokens are split into consecutive chunks whose
/// probability vectors are averaged. argmax ties go to the lower class code.
/// Throws InputError on an empty token list.
Prediction predict_comment(const Model& model, std::span<const std::string> tokens,
                           const EmbeddingMatrix* embeddings = nullptr);

SentimentLabel argmax_label(const Probabilities& p);

struct Evaluation {
    double accuracy = 0.0;
    ConfusionMatrix confusion;
    std::vector<int> predicted;
};

/// Comment-level evaluation. Throws InputError on an empty set.
Evaluation evaluate(const Model& model, std::span<const LabeledComment> data,
                    const EmbeddingMatrix* embeddings = nullptr);

/// Versioned binary container: magic, header JSON (config, vocabulary,
/// tensor shapes), then little-endian float32 tensors, then Adam moments.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace flamewatch
