#include "flamewatch/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "flamewatch/error.hpp"

namespace flamewatch {

ConfusionMatrix::ConfusionMatrix(std::size_t k, std::vector<std::string> names)
    : k_(k), counts_(k * k, 0), names_(std::move(names)) {
    if (k < 2) throw InputError("confusion matrix needs at least 2 classes");
    if (names_.empty()) {
        for (std::size_t i = 0; i < k; ++i) names_.push_back(std::to_string(i));
    } else if (names_.size() != k) {
        throw InputError("confusion matrix class names do not match k");
    }
}

ConfusionMatrix ConfusionMatrix::from_rows(const std::vector<std::vector<long long>>& rows,
                                           std::vector<std::string> names) {
    ConfusionMatrix m(rows.size(), std::move(names));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows.size()) throw InputError("confusion matrix is not square");
        for (std::size_t j = 0; j < rows.size(); ++j) {
            if (rows[i][j] < 0) throw InputError("confusion matrix has a negative count");
            m.counts_[i * m.k_ + j] = rows[i][j];
        }
    }
    return m;
}

void ConfusionMatrix::add(std::size_t actual, std::size_t predicted, long long n) {
    counts_.at(actual * k_ + predicted) += n;
}

long long ConfusionMatrix::row_sum(std::size_t actual) const {
    long long s = 0;
    for (std::size_t j = 0; j < k_; ++j) s += at(actual, j);
    return s;
}

long long ConfusionMatrix::column_sum(std::size_t predicted) const {
    long long s = 0;
    for (std::size_t i = 0; i < k_; ++i) s += at(i, predicted);
    return s;
}

long long ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), 0LL); }

ConfusionMatrix ConfusionMatrix::transposed() const {
    ConfusionMatrix t(k_, names_);
    for (std::size_t i = 0; i < k_; ++i)
        for (std::size_t j = 0; j < k_; ++j) t.counts_[j * k_ + i] = at(i, j);
    return t;
}

ConfusionMatrix confusion(std::span<const int> predicted, std::span<const int> actual, std::size_t k,
                          std::vector<std::string> names) {
    if (predicted.size() != actual.size())
        throw InputError("predicted and actual label lists differ in length");
    ConfusionMatrix m(k, std::move(names));
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const int p = predicted[i];
        const int a = actual[i];
        if (p < 0 || a < 0 || static_cast<std::size_t>(p) >= k || static_cast<std::size_t>(a) >= k)
            throw InputError("label outside [0, " + std::to_string(k) + ") at position " + std::to_string(i));
        m.add(static_cast<std::size_t>(a), static_cast<std::size_t>(p));
    }
    return m;
}

std::string_view orientation_name(Orientation o) { return o == Orientation::Standard ? "standard" : "paper"; }

Orientation parse_orientation(std::string_view s) {
    if (s == "standard") return Orientation::Standard;
    if (s == "paper") return Orientation::Paper;
    throw InputError("orientation must be 'standard' or 'paper'");
}

namespace {

double mean(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double harmonic(double a, double b) { return a + b == 0.0 ? 0.0 : 2.0 * a * b / (a + b); }

}  // namespace

MacroMetrics macro_metrics(const ConfusionMatrix& m, Orientation orientation) {
    if (m.k() == 0 || m.total() == 0) throw InputError("confusion matrix is empty");
    MacroMetrics out;
    out.orientation = orientation;
    auto rate = [&](long long num, long long den) {
        if (den == 0) {
            out.zero_division = true;
            return 0.0;
        }
        return static_cast<double>(num) / static_cast<double>(den);
    };
    for (std::size_t c = 0; c < m.k(); ++c) {
        const long long d = m.at(c, c);
        const double by_row = rate(d, m.row_sum(c));
        const double by_col = rate(d, m.column_sum(c));
        const double p = orientation == Orientation::Standard ? by_col : by_row;
        const double r = orientation == Orientation::Standard ? by_row : by_col;
        out.precision.push_back(p);
        out.recall.push_back(r);
        out.f1.push_back(harmonic(p, r));
    }
    out.macro_precision = mean(out.precision);
    out.macro_recall = mean(out.recall);
    out.macro_f1 = orientation == Orientation::Standard ? mean(out.f1)
                                                        : harmonic(out.macro_precision, out.macro_recall);
    return out;
}

nlohmann::json to_json(const ConfusionMatrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < m.k(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t j = 0; j < m.k(); ++j) row.push_back(m.at(i, j));
        rows.push_back(row);
    }
    return {{"classes", m.names()}, {"matrix", rows}};
}

ConfusionMatrix confusion_from_json(const nlohmann::json& j) {
    try {
        const nlohmann::json& rows = j.is_object() ? j.at("matrix") : j;
        std::vector<std::string> names;
        if (j.is_object() && j.contains("classes")) names = j.at("classes").get<std::vector<std::string>>();
        return ConfusionMatrix::from_rows(rows.get<std::vector<std::vector<long long>>>(), std::move(names));
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("bad confusion matrix JSON: ") + e.what());
    }
}

nlohmann::json to_json(const MacroMetrics& m) {
    return {{"orientation", orientation_name(m.orientation)},
            {"precision", m.precision},
            {"recall", m.recall},
            {"f1", m.f1},
            {"macro_precision", m.macro_precision},
            {"macro_recall", m.macro_recall},
            {"macro_f1", m.macro_f1},
            {"zero_division", m.zero_division}};
}

std::string format_table(const ConfusionMatrix& m, const MacroMetrics& metrics) {
    std::size_t width = 9;
    for (const auto& n : m.names()) width = std::max(width, n.size() + 2);
    auto cell = [&](const std::string& s) {
        std::string out(width > s.size() ? width - s.size() : 0, ' ');
        return out + s;
    };
    auto pct = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f%%", v * 100.0);
        return std::string(buf);
    };
    // Paper orientation shows the row-normalized rate at the end of each row.
    const bool paper = metrics.orientation == Orientation::Paper;
    const std::string row_rate = paper ? "Precision" : "Recall";
    const std::string col_rate = paper ? "Recall" : "Precision";

    std::string out = cell("actual\\pred");
    for (const auto& n : m.names()) out += cell(n);
    out += cell(row_rate) + "\n";
    for (std::size_t i = 0; i < m.k(); ++i) {
        out += cell(m.names()[i]);
        for (std::size_t j = 0; j < m.k(); ++j) out += cell(std::to_string(m.at(i, j)));
        out += cell(pct(paper ? metrics.precision[i] : metrics.recall[i])) + "\n";
    }
    out += cell(col_rate);
    for (std::size_t j = 0; j < m.k(); ++j) out += cell(pct(paper ? metrics.recall[j] : metrics.precision[j]));
    out += "\n";
    out += "macro precision " + pct(metrics.macro_precision) + ", macro recall " + pct(metrics.macro_recall) +
           ", macro F1 " + pct(metrics.macro_f1) + " (" + std::string(orientation_name(metrics.orientation)) +
           " orientation)\n";
    return out;
}

}  // namespace flamewatch
