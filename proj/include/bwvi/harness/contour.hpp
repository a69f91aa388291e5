#pragma once

#include "bwvi/dataset.hpp"
#include "bwvi/error.hpp"
#include "bwvi/gaussian.hpp"
#include "bwvi/targets.hpp"

#include <Eigen/Dense>

#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace bwvi::harness {

struct GridBounds {
    double x0 = -1.0, x1 = 1.0;
    double y0 = -1.0, y1 = 1.0;
    int nx = 101, ny = 101;
};

/// Log-density values on a regular grid over coordinates (0, 1).
/// values(i, j) is evaluated at (xs[j], ys[i]).
struct ContourGrid {
    std::string source;
    Eigen::VectorXd xs;
    Eigen::VectorXd ys;
    Eigen::MatrixXd values;
    Eigen::Index dim = 2;  // dimension of the underlying density

    bool operator==(const ContourGrid&) const = default;
};

namespace detail {

inline Eigen::VectorXd axis(double lo, double hi, int n) {
    Eigen::VectorXd a(n);
    for (int i = 0; i < n; ++i) a[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return a;
}

inline ContourGrid blank_grid(const GridBounds& b, Eigen::Index dim, std::string source) {
    require(b.nx >= 2 && b.ny >= 2, "contour grid: resolution must be >= 2 per axis");
    require(b.x1 > b.x0 && b.y1 > b.y0, "contour grid: empty bounds");
    require(dim >= 2, "contour grid: density must have dim >= 2");
    ContourGrid g;
    g.source = std::move(source);
    g.dim = dim;
    g.xs = axis(b.x0, b.x1, b.nx);
    g.ys = axis(b.y0, b.y1, b.ny);
    g.values.resize(b.ny, b.nx);
    return g;
}

}  // namespace detail

/// Gaussian: the exact marginal over the first two coordinates.
inline ContourGrid emit_contour_grid(const GaussianState& q, const GridBounds& b) {
    ContourGrid g = detail::blank_grid(b, q.dim(), "gaussian");
    const GaussianState marginal(q.mean().head(2), q.covariance().topLeftCorner(2, 2));
    Eigen::Vector2d z;
    for (Eigen::Index i = 0; i < g.ys.size(); ++i)
        for (Eigen::Index j = 0; j < g.xs.size(); ++j) {
            z << g.xs[j], g.ys[i];
            g.values(i, j) = log_density(marginal, z);
        }
    return g;
}

/// Target: unnormalized log density on the slice where coordinates beyond the first two are 0.
inline ContourGrid emit_contour_grid(const TargetModel& target, const GridBounds& b) {
    ContourGrid g = detail::blank_grid(b, target.dim(), target.name());
    Eigen::VectorXd z = Eigen::VectorXd::Zero(target.dim());
    for (Eigen::Index i = 0; i < g.ys.size(); ++i)
        for (Eigen::Index j = 0; j < g.xs.size(); ++j) {
            z[0] = g.xs[j];
            z[1] = g.ys[i];
            g.values(i, j) = target.log_unnorm(z);
        }
    return g;
}

/// CSV layout: the header row carries the axis metadata and x values,
///   "z1\z0 source=<name> dim=<d> rest=<marginal|slice0>",x_0,...,x_{nx-1}
/// then one row per y value: y_i,v_i0,...
inline void write_contour_csv(std::ostream& out, const ContourGrid& g) {
    const bool gaussian = g.source == "gaussian";
    std::ostringstream s;
    s.precision(17);
    s << "z1\\z0 source=" << g.source << " dim=" << g.dim << " rest=" << (g.dim == 2 ? "none" : gaussian ? "marginal" : "slice0");
    for (Eigen::Index j = 0; j < g.xs.size(); ++j) s << ',' << g.xs[j];
    s << '\n';
    for (Eigen::Index i = 0; i < g.ys.size(); ++i) {
        s << g.ys[i];
        for (Eigen::Index j = 0; j < g.xs.size(); ++j) s << ',' << g.values(i, j);
        s << '\n';
    }
    out << s.str();
}

inline ContourGrid read_contour_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("contour csv: empty input");
    auto cells = bwvi::detail::split_csv_line(line, 1);
    ContourGrid g;
    std::istringstream head(cells.front());
    std::string tok;
    while (head >> tok) {
        if (tok.rfind("source=", 0) == 0) g.source = tok.substr(7);
        if (tok.rfind("dim=", 0) == 0) g.dim = std::stol(tok.substr(4));
    }
    const auto nx = static_cast<Eigen::Index>(cells.size()) - 1;
    if (nx < 2) throw ParseError("contour csv: header has fewer than two x values");
    g.xs.resize(nx);
    for (Eigen::Index j = 0; j < nx; ++j)
        if (!bwvi::detail::parse_double(cells[static_cast<std::size_t>(j + 1)], g.xs[j])) throw NonNumeric("contour csv: x axis");
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        cells = bwvi::detail::split_csv_line(line, line_no);
        if (static_cast<Eigen::Index>(cells.size()) != nx + 1) throw ParseError("contour csv: ragged row " + std::to_string(line_no));
        std::vector<double> r(cells.size());
        for (std::size_t k = 0; k < cells.size(); ++k) {
            // -inf is written by the stream as "-inf"
            if (cells[k] == "-inf") r[k] = -std::numeric_limits<double>::infinity();
            else if (!bwvi::detail::parse_double(cells[k], r[k])) throw NonNumeric("contour csv: row " + std::to_string(line_no));
        }
        rows.push_back(std::move(r));
    }
    g.ys.resize(static_cast<Eigen::Index>(rows.size()));
    g.values.resize(static_cast<Eigen::Index>(rows.size()), nx);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        g.ys[static_cast<Eigen::Index>(i)] = rows[i][0];
        for (Eigen::Index j = 0; j < nx; ++j) g.values(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j + 1)];
    }
    return g;
}

/// Default bounds: target-specific windows, or mean +- 4 sd for a Gaussian.
inline GridBounds default_bounds(const TargetModel& target, int nx = 101, int ny = 101) {
    GridBounds b{-8.0, 8.0, -8.0, 8.0, nx, ny};
    if (target.name() == "banana") b = {-25.0, 25.0, -20.0, 6.0, nx, ny};
    return b;
}

inline GridBounds default_bounds(const GaussianState& q, int nx = 101, int ny = 101) {
    const double sx = 4.0 * std::sqrt(q.covariance()(0, 0));
    const double sy = 4.0 * std::sqrt(q.covariance()(1, 1));
    return {q.mean()[0] - sx, q.mean()[0] + sx, q.mean()[1] - sy, q.mean()[1] + sy, nx, ny};
}

}  // namespace bwvi::harness
