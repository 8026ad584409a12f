#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace flamewatch {

/// Rows are actual classes, columns predicted classes.
class ConfusionMatrix {
public:
    ConfusionMatrix() = default;
    /// Throws InputError when k < 2 or names don't match k.
    explicit ConfusionMatrix(std::size_t k, std::vector<std::string> names = {});
    /// Throws InputError for a non-square / negative / too small matrix.
    static ConfusionMatrix from_rows(const std::vector<std::vector<long long>>& rows,
                                     std::vector<std::string> names = {});

    std::size_t k() const { return k_; }
    long long at(std::size_t actual, std::size_t predicted) const { return counts_[actual * k_ + predicted]; }
    void add(std::size_t actual, std::size_t predicted, long long n = 1);
    long long row_sum(std::size_t actual) const;
    long long column_sum(std::size_t predicted) const;
    long long total() const;
    const std::vector<std::string>& names() const { return names_; }
    ConfusionMatrix transposed() const;

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    std::size_t k_ = 0;
    std::vector<long long> counts_;
    std::vector<std::string> names_;
};

/// Counts (actual, predicted) pairs. Throws InputError on length mismatch or
/// a label outside [0, k).
ConfusionMatrix confusion(std::span<const int> predicted, std::span<const int> actual, std::size_t k,
                          std::vector<std::string> names = {});

enum class Orientation {
    /// precision = diag / column sum, recall = diag / row sum,
    /// macro F1 = mean of per-class F1.
    Standard,
    /// The layout of the published lexicon tables: "precision" is the
    /// row-normalized rate and "recall" the column-normalized one, with
    /// macro F1 the harmonic mean of macro precision and macro recall.
    Paper,
};

std::string_view orientation_name(Orientation o);
/// Throws InputError for anything but "standard" / "paper".
Orientation parse_orientation(std::string_view s);

struct MacroMetrics {
    Orientation orientation = Orientation::Standard;
    std::vector<double> precision;
    std::vector<double> recall;
    std::vector<double> f1;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    /// Set when some rate had a zero denominator and was defined as 0.
    bool zero_division = false;
};

/// Throws InputError on an empty (all-zero or k = 0) matrix.
MacroMetrics macro_metrics(const ConfusionMatrix& m, Orientation orientation);

nlohmann::json to_json(const ConfusionMatrix& m);
/// Accepts {"matrix": [[..],..], "classes": [..]} or a bare array of rows.
ConfusionMatrix confusion_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MacroMetrics& m);

/// Fixed-width text rendering of the matrix with per-class rates and macro values.
std::string format_table(const ConfusionMatrix& m, const MacroMetrics& metrics);

}  // namespace flamewatch
