#pragma once

#include "bwvi/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace bwvi {

struct DatasetConfig {
    std::string label_column;
    std::string positive_label = "1";
    int pca_components = 0;  // 0 keeps every standardized column
};

struct Dataset {
    Eigen::MatrixXd features;
    Eigen::VectorXd labels;
    std::vector<std::string> feature_names;
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

// RFC 4180-style split of one record: commas, double-quoted fields, "" escapes.
inline std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    bool was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            if (!trim(cur).empty()) throw ParseError("line " + std::to_string(line_no) + ": stray quote");
            cur.clear();
            quoted = true;
            was_quoted = true;
        } else if (c == ',') {
            out.push_back(was_quoted ? cur : trim(cur));
            cur.clear();
            was_quoted = false;
        } else {
            cur += c;
        }
    }
    if (quoted) throw ParseError("line " + std::to_string(line_no) + ": unterminated quoted field");
    out.push_back(was_quoted ? cur : trim(cur));
    return out;
}

inline bool parse_double(const std::string& s, double& v) {
    if (s.empty()) return false;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (*first == '+') ++first;
    auto [p, ec] = std::from_chars(first, last, v);
    return ec == std::errc() && p == last;
}

}  // namespace detail

/// Reads a header-row CSV. The label column is mapped to 1 where it equals
/// cfg.positive_label and 0 otherwise; at most two distinct label values may occur.
/// Every other column must be numeric. No preprocessing is applied here.
inline Dataset parse_dataset(std::istream& in, const DatasetConfig& cfg) {
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw ParseError("empty input: header row missing");
    ++line_no;
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = detail::split_csv_line(line, line_no);

    std::ptrdiff_t label_idx = -1;
    for (std::size_t j = 0; j < header.size(); ++j)
        if (header[j] == cfg.label_column) label_idx = static_cast<std::ptrdiff_t>(j);
    if (label_idx < 0) throw MissingColumn("label column '" + cfg.label_column + "' not found in header");

    Dataset ds;
    for (std::size_t j = 0; j < header.size(); ++j)
        if (static_cast<std::ptrdiff_t>(j) != label_idx) ds.feature_names.push_back(header[j]);
    const auto nf = static_cast<Eigen::Index>(ds.feature_names.size());

    std::vector<std::vector<double>> rows;
    std::vector<double> labels;
    std::set<std::string> label_values;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_csv_line(line, line_no);
        if (fields.size() != header.size())
            throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                             " fields, got " + std::to_string(fields.size()));
        std::vector<double> row;
        row.reserve(static_cast<std::size_t>(nf));
        for (std::size_t j = 0; j < fields.size(); ++j) {
            if (static_cast<std::ptrdiff_t>(j) == label_idx) continue;
            double v = 0.0;
            if (!detail::parse_double(detail::trim(fields[j]), v))
                throw NonNumeric("line " + std::to_string(line_no) + ", column '" + header[j] + "': '" + fields[j] +
                                 "' is not numeric");
            row.push_back(v);
        }
        const std::string& lab = fields[static_cast<std::size_t>(label_idx)];
        label_values.insert(lab);
        if (label_values.size() > 2)
            throw ParseError("label column '" + cfg.label_column + "' has more than two distinct values");
        labels.push_back(lab == cfg.positive_label ? 1.0 : 0.0);
        rows.push_back(std::move(row));
    }

    ds.features.resize(static_cast<Eigen::Index>(rows.size()), nf);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (Eigen::Index j = 0; j < nf; ++j)
            ds.features(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
    ds.labels = Eigen::Map<Eigen::VectorXd>(labels.data(), static_cast<Eigen::Index>(labels.size()));
    return ds;
}

inline Dataset load_dataset(const std::string& path, const DatasetConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open dataset file '" + path + "'");
    return parse_dataset(in, cfg);
}

/// Column-wise z-scoring (population standard deviation).
inline Eigen::MatrixXd standardize(const Eigen::MatrixXd& x, const std::vector<std::string>& names = {}) {
    if (x.rows() < 2) throw ZeroVariance("standardize: at least two rows required");
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double mu = x.col(j).mean();
        const double sd = std::sqrt((x.col(j).array() - mu).square().mean());
        if (!(sd > 1e-12 * std::max(1.0, std::abs(mu)))) {
            const std::string col = j < static_cast<Eigen::Index>(names.size()) ? names[static_cast<std::size_t>(j)]
                                                                               : std::to_string(j);
            throw ZeroVariance("column '" + col + "' has zero variance");
        }
        out.col(j) = (x.col(j).array() - mu) / sd;
    }
    return out;
}

struct PcaResult {
    Eigen::MatrixXd projected;        // n x k scores
    Eigen::MatrixXd components;       // d x k, orthonormal columns
    Eigen::VectorXd eigenvalues;      // all d, descending
    double explained_variance_ratio;  // of the k kept components
};

/// PCA on already-centred data. Components come in descending eigenvalue order, each
/// signed so its largest-magnitude loading is positive.
inline PcaResult pca(const Eigen::MatrixXd& centred, int n_components) {
    const auto d = centred.cols();
    require(n_components >= 1 && n_components <= d, "pca: n_components must be in [1, feature count]");
    const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(centred.rows());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    // Eigen returns ascending order.
    PcaResult r;
    r.eigenvalues = es.eigenvalues().reverse();
    const Eigen::MatrixXd vecs = es.eigenvectors().rowwise().reverse();
    r.components = vecs.leftCols(n_components);
    for (int k = 0; k < n_components; ++k) {
        Eigen::Index arg = 0;
        r.components.col(k).cwiseAbs().maxCoeff(&arg);
        if (r.components(arg, k) < 0.0) r.components.col(k) *= -1.0;
    }
    r.projected = centred * r.components;
    const double total = r.eigenvalues.cwiseMax(0.0).sum();
    r.explained_variance_ratio = total > 0.0 ? r.eigenvalues.head(n_components).cwiseMax(0.0).sum() / total : 0.0;
    return r;
}

/// Standardize, then project onto the top n_components principal directions.
inline Eigen::MatrixXd preprocess(const Eigen::MatrixXd& features, int n_components,
                                  const std::vector<std::string>& names = {}) {
    const Eigen::MatrixXd z = standardize(features, names);
    if (n_components <= 0) return z;
    return pca(z, n_components).projected;
}

}  // namespace bwvi
