#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "portopt/rng.hpp"

namespace portopt {

/// Raised when input data or configuration fails validation.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised when a request exceeds a size guard (e.g. exact methods on
/// instances too large to enumerate).
struct GuardError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// An asset universe: per-asset expected returns and volatilities plus the
/// correlation matrix. The covariance matrix is always derived from
/// (corr, sigma), never read from a file.
struct Instance {
    std::string name;
    int n = 0;
    Eigen::VectorXd mu;      // expected return per asset
    Eigen::VectorXd sigma;   // return standard deviation per asset
    Eigen::MatrixXd corr;    // symmetric, unit diagonal
    Eigen::MatrixXd cov;     // corr(i,j) * sigma(i) * sigma(j)
};

namespace detail {

inline void fnv1a_mix(std::uint64_t& h, const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
}

inline void derive_cov(Instance& inst) {
    inst.cov = inst.corr.cwiseProduct(inst.sigma * inst.sigma.transpose());
}

inline void validate_instance(const Instance& inst) {
    if (inst.n < 1) throw ValidationError("instance '" + inst.name + "': n must be >= 1");
    if (inst.mu.size() != inst.n || inst.sigma.size() != inst.n ||
        inst.corr.rows() != inst.n || inst.corr.cols() != inst.n)
        throw ValidationError("instance '" + inst.name + "': dimension mismatch");
    for (int i = 0; i < inst.n; ++i) {
        if (inst.sigma(i) < 0.0)
            throw ValidationError("instance '" + inst.name + "': negative sigma at asset " +
                                  std::to_string(i));
        if (std::abs(inst.corr(i, i) - 1.0) > 1e-9)
            throw ValidationError("instance '" + inst.name + "': correlation diagonal not 1 at asset " +
                                  std::to_string(i));
        for (int j = 0; j < inst.n; ++j) {
            if (std::abs(inst.corr(i, j) - inst.corr(j, i)) > 1e-12)
                throw ValidationError("instance '" + inst.name + "': correlation not symmetric");
            if (std::abs(inst.corr(i, j)) > 1.0 + 1e-9)
                throw ValidationError("instance '" + inst.name + "': |correlation| > 1 at (" +
                                      std::to_string(i) + "," + std::to_string(j) + ")");
        }
    }
}

}  // namespace detail

/// Builds a validated Instance from raw pieces; derives cov.
inline Instance make_instance(std::string name, Eigen::VectorXd mu, Eigen::VectorXd sigma,
                              Eigen::MatrixXd corr) {
    Instance inst;
    inst.name = std::move(name);
    inst.n = static_cast<int>(mu.size());
    inst.mu = std::move(mu);
    inst.sigma = std::move(sigma);
    inst.corr = std::move(corr);
    detail::validate_instance(inst);
    detail::derive_cov(inst);
    return inst;
}

// ---------------------------------------------------------------------------
// Constraint set
// ---------------------------------------------------------------------------

/// Portfolio constraint parameters: cardinality K, per-asset weight bounds,
/// pre-assigned assets, and the round-lot size tau (0 disables round lots).
struct ConstraintSet {
    int K = 0;
    Eigen::VectorXd floor_;          // lower weight bound per asset
    Eigen::VectorXd ceiling_;        // upper weight bound per asset
    std::vector<std::uint8_t> pre;   // 1 if the asset must be in every portfolio
    double tau = 0.0;

    int n() const { return static_cast<int>(floor_.size()); }
    int preassigned_count() const {
        int L = 0;
        for (auto z : pre) L += z;
        return L;
    }
    bool has_lots() const { return tau > 0.0; }
    /// Number of lots that make up the whole budget; only meaningful when tau > 0.
    int total_lots() const { return static_cast<int>(std::llround(1.0 / tau)); }
    int lot_floor(int i) const { return static_cast<int>(std::ceil(floor_(i) / tau - 1e-9)); }
    int lot_ceiling(int i) const { return static_cast<int>(std::floor(ceiling_(i) / tau + 1e-9)); }
};

namespace detail {

// Rejects (K, floor, ceiling, tau) combinations for which no K-subset that
// contains the pre-assigned assets can sum to 1.
inline void validate_constraints(const ConstraintSet& cs) {
    const int n = cs.n();
    if (n < 1) throw ValidationError("constraint set: empty");
    if (static_cast<int>(cs.pre.size()) != n || cs.ceiling_.size() != n)
        throw ValidationError("constraint set: dimension mismatch");
    const int L = cs.preassigned_count();
    if (cs.K < 1 || cs.K > n)
        throw ValidationError("constraint set: K=" + std::to_string(cs.K) +
                              " outside [1, n=" + std::to_string(n) + "]");
    if (L > cs.K)
        throw ValidationError("constraint set: " + std::to_string(L) +
                              " pre-assigned assets exceed K=" + std::to_string(cs.K));
    for (int i = 0; i < n; ++i) {
        if (cs.floor_(i) < 0.0 || cs.floor_(i) > cs.ceiling_(i) || cs.ceiling_(i) > 1.0)
            throw ValidationError("constraint set: bounds violate 0 <= floor <= ceiling <= 1 at asset " +
                                  std::to_string(i));
    }
    if (cs.tau < 0.0) throw ValidationError("constraint set: tau must be >= 0");
    if (cs.tau > 0.0) {
        const double inv = 1.0 / cs.tau;
        if (std::abs(inv - std::llround(inv)) > 1e-9)
            throw ValidationError("constraint set: 1/tau must be an integer, got tau=" +
                                  std::to_string(cs.tau));
    }

    // Cheapest / richest admissible K-subset: pre-assigned assets plus the
    // smallest floors (resp. largest ceilings) among the rest.
    std::vector<int> free_idx;
    double lo_sum = 0.0, hi_sum = 0.0;
    for (int i = 0; i < n; ++i) {
        if (cs.pre[i]) {
            lo_sum += cs.floor_(i);
            hi_sum += cs.ceiling_(i);
        } else {
            free_idx.push_back(i);
        }
    }
    const int slots = cs.K - L;
    std::vector<double> lo_free, hi_free;
    for (int i : free_idx) {
        lo_free.push_back(cs.floor_(i));
        hi_free.push_back(cs.ceiling_(i));
    }
    std::sort(lo_free.begin(), lo_free.end());
    std::sort(hi_free.begin(), hi_free.end(), std::greater<>());
    for (int t = 0; t < slots; ++t) {
        lo_sum += lo_free[t];
        hi_sum += hi_free[t];
    }
    if (lo_sum > 1.0 + 1e-9 || hi_sum < 1.0 - 1e-9)
        throw ValidationError("constraint set: no K-subset admits sum(w)=1 under the bounds");
    if (cs.tau > 0.0) {
        // same check on the lot lattice
        long long lo_lots = 0, hi_lots = 0;
        for (int i = 0; i < n; ++i)
            if (cs.pre[i]) {
                lo_lots += cs.lot_floor(i);
                hi_lots += cs.lot_ceiling(i);
            }
        std::vector<long long> lo_f, hi_f;
        for (int i : free_idx) {
            lo_f.push_back(cs.lot_floor(i));
            hi_f.push_back(cs.lot_ceiling(i));
        }
        std::sort(lo_f.begin(), lo_f.end());
        std::sort(hi_f.begin(), hi_f.end(), std::greater<>());
        for (int t = 0; t < slots; ++t) {
            lo_lots += lo_f[t];
            hi_lots += hi_f[t];
        }
        const int R = cs.total_lots();
        if (lo_lots > R || hi_lots < R)
            throw ValidationError("constraint set: no K-subset admits a full lot allocation");
    }
}

}  // namespace detail

/// Uniform-bound constraint set; preassigned holds 0-based asset indices.
inline ConstraintSet make_constraints(int n, int K, double floor_w, double ceiling_w, double tau,
                                      const std::vector<int>& preassigned = {}) {
    ConstraintSet cs;
    cs.K = K;
    cs.floor_ = Eigen::VectorXd::Constant(n, floor_w);
    cs.ceiling_ = Eigen::VectorXd::Constant(n, ceiling_w);
    cs.pre.assign(n, 0);
    for (int i : preassigned) {
        if (i < 0 || i >= n)
            throw ValidationError("constraint set: pre-assigned index " + std::to_string(i) +
                                  " outside [0," + std::to_string(n - 1) + "]");
        cs.pre[i] = 1;
    }
    cs.tau = tau;
    detail::validate_constraints(cs);
    return cs;
}

/// Fully general constraint set (per-asset bounds).
inline ConstraintSet make_constraints(int K, Eigen::VectorXd floor_w, Eigen::VectorXd ceiling_w,
                                      std::vector<std::uint8_t> pre, double tau) {
    ConstraintSet cs;
    cs.K = K;
    cs.floor_ = std::move(floor_w);
    cs.ceiling_ = std::move(ceiling_w);
    cs.pre = std::move(pre);
    cs.tau = tau;
    detail::validate_constraints(cs);
    return cs;
}

// ---------------------------------------------------------------------------
// OR-Library flat-file format
//   line 1:       n
//   lines 2..n+1: mu_i sigma_i
//   remaining:    i j corr_ij   (1-based, each pair with i <= j exactly once)
// ---------------------------------------------------------------------------

inline Instance load_orlibrary(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'");

    auto fail = [&](int line_no, const std::string& what) {
        throw ValidationError(path + ":" + std::to_string(line_no) + ": " + what);
    };

    int line_no = 0;
    std::string line;
    auto next_line = [&]() -> bool {
        while (std::getline(in, line)) {
            ++line_no;
            if (line.find_first_not_of(" \t\r\n") != std::string::npos) return true;
        }
        return false;
    };

    if (!next_line()) fail(line_no, "missing asset count");
    int n = 0;
    {
        std::istringstream ss(line);
        if (!(ss >> n) || n < 1) fail(line_no, "invalid asset count '" + line + "'");
    }

    Eigen::VectorXd mu(n), sigma(n);
    for (int i = 0; i < n; ++i) {
        if (!next_line()) fail(line_no, "expected " + std::to_string(n) + " mean/stddev lines");
        std::istringstream ss(line);
        if (!(ss >> mu(i) >> sigma(i))) fail(line_no, "cannot parse mean/stddev pair");
    }

    Eigen::MatrixXd corr = Eigen::MatrixXd::Zero(n, n);
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> seen =
        Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(n, n);
    while (next_line()) {
        std::istringstream ss(line);
        int i = 0, j = 0;
        double rho = 0.0;
        if (!(ss >> i >> j >> rho)) fail(line_no, "cannot parse correlation entry");
        if (i < 1 || i > n || j < 1 || j > n) fail(line_no, "asset index outside 1.." + std::to_string(n));
        if (i > j) std::swap(i, j);
        if (seen(i - 1, j - 1)) fail(line_no, "duplicate correlation pair (" + std::to_string(i) + "," +
                                                  std::to_string(j) + ")");
        seen(i - 1, j - 1) = 1;
        corr(i - 1, j - 1) = rho;
        corr(j - 1, i - 1) = rho;
    }
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j)
            if (!seen(i, j))
                throw ValidationError(path + ": missing correlation pair (" + std::to_string(i + 1) +
                                      "," + std::to_string(j + 1) + ")");

    std::string name = path;
    if (auto pos = name.find_last_of("/\\"); pos != std::string::npos) name = name.substr(pos + 1);
    if (auto pos = name.rfind('.'); pos != std::string::npos) name = name.substr(0, pos);
    return make_instance(name, std::move(mu), std::move(sigma), std::move(corr));
}

inline void save_orlibrary(const Instance& inst, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write '" + path + "'");
    char buf[96];
    out << inst.n << "\n";
    for (int i = 0; i < inst.n; ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g %.17g\n", inst.mu(i), inst.sigma(i));
        out << buf;
    }
    for (int i = 0; i < inst.n; ++i)
        for (int j = i; j < inst.n; ++j) {
            std::snprintf(buf, sizeof(buf), "%d %d %.17g\n", i + 1, j + 1, inst.corr(i, j));
            out << buf;
        }
}

// ---------------------------------------------------------------------------
// Price-history CSV: header row, ISO-8601 date column, one close-price
// column per asset. Prices are turned into cumulative profits relative to
// the first row, and mu/cov are estimated from the in-sample profit rows.
// ---------------------------------------------------------------------------

/// An Instance estimated from price history, keeping the raw series so
/// rows after the split can be used for out-of-sample evaluation.
struct PriceInstance {
    Instance instance;
    std::vector<std::string> dates;     // all rows, in file order
    Eigen::MatrixXd prices;             // all rows x assets
    std::vector<std::string> asset_names;
    int in_sample_rows = 0;             // rows with date <= split
};

inline PriceInstance load_price_history(const std::string& path, const std::string& split_date) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'");

    std::string line;
    int line_no = 0;
    auto fail = [&](const std::string& what) {
        throw ValidationError(path + ":" + std::to_string(line_no) + ": " + what);
    };

    if (!std::getline(in, line)) fail("empty file");
    ++line_no;
    PriceInstance pi;
    {
        std::stringstream ss(line);
        std::string cell;
        bool first = true;
        while (std::getline(ss, cell, ',')) {
            if (first) {
                first = false;  // date column header
            } else {
                if (!cell.empty() && cell.back() == '\r') cell.pop_back();
                pi.asset_names.push_back(cell);
            }
        }
    }
    const int n = static_cast<int>(pi.asset_names.size());
    if (n < 1) fail("no asset columns");

    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        std::stringstream ss(line);
        std::string cell;
        if (!std::getline(ss, cell, ',')) fail("missing date cell");
        pi.dates.push_back(cell);
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                fail("cannot parse price '" + cell + "'");
            }
        }
        if (static_cast<int>(row.size()) != n)
            fail("ragged row: expected " + std::to_string(n) + " prices, got " +
                 std::to_string(row.size()));
        rows.push_back(std::move(row));
    }
    const int T = static_cast<int>(rows.size());
    pi.prices.resize(T, n);
    for (int t = 0; t < T; ++t)
        for (int i = 0; i < n; ++i) pi.prices(t, i) = rows[t][i];

    // ISO-8601 dates compare lexicographically
    pi.in_sample_rows = 0;
    for (const auto& d : pi.dates)
        if (split_date.empty() || d <= split_date) ++pi.in_sample_rows;
    if (pi.in_sample_rows < 2)
        throw ValidationError(path + ": fewer than 2 in-sample rows (split '" + split_date + "')");

    for (int i = 0; i < n; ++i)
        if (pi.prices(0, i) <= 0.0)
            throw ValidationError(path + ": non-positive baseline price for asset '" +
                                  pi.asset_names[i] + "'");

    // cumulative profit relative to the first row, rows 1..T_in-1
    const int P = pi.in_sample_rows - 1;
    Eigen::MatrixXd profit(P, n);
    for (int t = 0; t < P; ++t)
        for (int i = 0; i < n; ++i)
            profit(t, i) = (pi.prices(t + 1, i) - pi.prices(0, i)) / pi.prices(0, i);

    Eigen::VectorXd mu = profit.colwise().mean();
    Eigen::MatrixXd centered = profit.rowwise() - mu.transpose();
    // sample covariance (divisor P-1); a single profit row yields the zero matrix
    Eigen::MatrixXd cov = (centered.transpose() * centered) / std::max(P - 1, 1);

    Eigen::VectorXd sigma = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j && sigma(i) > 0.0 && sigma(j) > 0.0)
                corr(i, j) = std::clamp(cov(i, j) / (sigma(i) * sigma(j)), -1.0, 1.0);

    std::string name = path;
    if (auto pos = name.find_last_of("/\\"); pos != std::string::npos) name = name.substr(pos + 1);
    if (auto pos = name.rfind('.'); pos != std::string::npos) name = name.substr(0, pos);
    pi.instance = make_instance(name, std::move(mu), std::move(sigma), std::move(corr));
    // keep the exact estimated covariance (floating-point round trip through
    // corr*sigma*sigma can differ in the last ulp)
    pi.instance.cov = std::move(cov);
    return pi;
}

// ---------------------------------------------------------------------------
// Synthetic instances
// ---------------------------------------------------------------------------

namespace detail {

inline Instance factor_model_instance(std::string name, int n, std::uint64_t seed, int factors,
                                      double mu_lo, double mu_hi, double sigma_lo, double sigma_hi,
                                      double load_scale, double noise_scale) {
    Rng rng(seed);
    Eigen::VectorXd mu(n), sigma(n);
    for (int i = 0; i < n; ++i) mu(i) = rng.uniform(mu_lo, mu_hi);
    for (int i = 0; i < n; ++i) sigma(i) = rng.uniform(sigma_lo, sigma_hi);

    // corr = D^{-1/2} (B B^T + diag(d)) D^{-1/2}: positive semidefinite with
    // unit diagonal by construction
    Eigen::MatrixXd B(n, factors);
    for (int i = 0; i < n; ++i)
        for (int f = 0; f < factors; ++f) B(i, f) = load_scale * rng.normal();
    Eigen::VectorXd d(n);
    for (int i = 0; i < n; ++i) d(i) = noise_scale * (0.1 + rng.uniform());
    Eigen::MatrixXd A = B * B.transpose();
    A.diagonal() += d;
    Eigen::VectorXd scale = A.diagonal().cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd corr = scale.asDiagonal() * A * scale.asDiagonal();
    corr.diagonal().setOnes();
    corr = ((corr + corr.transpose()) / 2.0).eval();
    return make_instance(std::move(name), std::move(mu), std::move(sigma), std::move(corr));
}

}  // namespace detail

/// Deterministic random test instance: factor-model correlations (PSD),
/// sigma in (0, 0.5], mu in [-0.05, 0.15].
inline Instance random_instance(int n, std::uint64_t seed) {
    if (n < 1) throw ValidationError("random_instance: n must be >= 1");
    return detail::factor_model_instance("rand-n" + std::to_string(n) + "-s" + std::to_string(seed),
                                         n, seed, std::min(n, 3), -0.05, 0.15, 0.005, 0.5, 0.6, 0.5);
}

/// Stable 64-bit digest of an instance and constraint set. Reference fronts
/// and manifests carry it so metrics can refuse mismatched data.
inline std::uint64_t fingerprint(const Instance& inst, const ConstraintSet& cs) {
    std::uint64_t h = 1469598103934665603ull;
    detail::fnv1a_mix(h, &inst.n, sizeof(inst.n));
    detail::fnv1a_mix(h, inst.mu.data(), sizeof(double) * inst.mu.size());
    detail::fnv1a_mix(h, inst.cov.data(), sizeof(double) * inst.cov.size());
    detail::fnv1a_mix(h, &cs.K, sizeof(cs.K));
    detail::fnv1a_mix(h, cs.floor_.data(), sizeof(double) * cs.floor_.size());
    detail::fnv1a_mix(h, cs.ceiling_.data(), sizeof(double) * cs.ceiling_.size());
    detail::fnv1a_mix(h, cs.pre.data(), cs.pre.size());
    detail::fnv1a_mix(h, &cs.tau, sizeof(cs.tau));
    return h;
}

/// Deterministic synthetic instance with equity-index-like weekly-return
/// statistics: small positive means, volatilities in the few-percent range,
/// and broadly positive correlations from a dominant market factor.
inline Instance market_like_instance(int n, std::uint64_t seed) {
    if (n < 1) throw ValidationError("market_like_instance: n must be >= 1");
    Rng rng(seed ^ 0xa5a5a5a5ull);
    Eigen::VectorXd mu(n), sigma(n);
    for (int i = 0; i < n; ++i) mu(i) = rng.uniform(0.001, 0.010);
    for (int i = 0; i < n; ++i) sigma(i) = rng.uniform(0.025, 0.060);

    // one dominant market factor plus two weak sector factors
    Eigen::MatrixXd B(n, 3);
    for (int i = 0; i < n; ++i) {
        B(i, 0) = rng.uniform(0.55, 0.85);
        B(i, 1) = 0.25 * rng.normal();
        B(i, 2) = 0.15 * rng.normal();
    }
    Eigen::VectorXd d(n);
    for (int i = 0; i < n; ++i) d(i) = std::max(1e-3, 1.0 - B.row(i).squaredNorm());
    Eigen::MatrixXd A = B * B.transpose();
    A.diagonal() += d;
    Eigen::VectorXd scale = A.diagonal().cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd corr = scale.asDiagonal() * A * scale.asDiagonal();
    corr.diagonal().setOnes();
    corr = ((corr + corr.transpose()) / 2.0).eval();
    return make_instance("market-n" + std::to_string(n) + "-s" + std::to_string(seed), std::move(mu),
                         std::move(sigma), std::move(corr));
}

}  // namespace portopt
