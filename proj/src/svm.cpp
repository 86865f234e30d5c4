#include "falldet/svm.hpp"

#include <algorithm>
#include <cmath>

#include "falldet/rng.hpp"

namespace falldet {

double rbf_kernel(const FeatureVector& a, const FeatureVector& b, double gamma) {
    if (a.size() != b.size()) throw Error("dimension mismatch");
    if (!(gamma > 0.0)) throw Error("gamma must be positive");
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        d2 += d * d;
    }
    return std::exp(-gamma * d2);
}

namespace {

// Platt's SMO: pick two multipliers, solve the two-variable subproblem
// analytically, keep an error cache E_i = f(x_i) - y_i up to date.
class SmoSolver {
public:
    SmoSolver(std::span<const FeatureVector> xs, std::span<const double> ys,
              double c, double gamma, double tol, std::size_t max_passes,
              std::uint64_t seed)
        : xs_(xs), ys_(ys), n_(xs.size()), c_(c), gamma_(gamma), tol_(tol),
          max_passes_(max_passes), rng_(seed), alpha_(n_, 0.0), errors_(n_),
          rows_(n_), row_ready_(n_, false) {
        for (std::size_t i = 0; i < n_; ++i) errors_[i] = -ys_[i];  // f == 0 initially
    }

    void solve() {
        std::size_t passes = 0;
        std::size_t num_changed = 0;
        bool examine_all = true;
        while ((num_changed > 0 || examine_all) && passes < max_passes_) {
            num_changed = 0;
            for (std::size_t i = 0; i < n_; ++i) {
                if (examine_all || (alpha_[i] > 0.0 && alpha_[i] < c_))
                    num_changed += examine(i);
            }
            if (examine_all)
                examine_all = false;
            else if (num_changed == 0)
                examine_all = true;
            ++passes;
        }
    }

    const std::vector<double>& alphas() const { return alpha_; }
    double bias() const { return b_; }

private:
    const std::vector<double>& row(std::size_t i) {
        if (!row_ready_[i]) {
            rows_[i].resize(n_);
            for (std::size_t j = 0; j < n_; ++j)
                rows_[i][j] = rbf_kernel(xs_[i], xs_[j], gamma_);
            row_ready_[i] = true;
        }
        return rows_[i];
    }

    std::size_t examine(std::size_t i2) {
        const double y2 = ys_[i2];
        const double a2 = alpha_[i2];
        const double r2 = errors_[i2] * y2;
        const bool violates =
            (r2 < -tol_ && a2 < c_) || (r2 > tol_ && a2 > 0.0);
        if (!violates) return 0;

        // Heuristic 1: the partner with the largest |E1 - E2| step.
        std::size_t best = n_;
        double best_gap = -1.0;
        for (std::size_t i = 0; i < n_; ++i) {
            if (i == i2 || !(alpha_[i] > 0.0 && alpha_[i] < c_)) continue;
            const double gap = std::fabs(errors_[i] - errors_[i2]);
            if (gap > best_gap) {
                best_gap = gap;
                best = i;
            }
        }
        if (best < n_ && take_step(best, i2)) return 1;

        // Heuristic 2: non-bound points from a random start.
        const std::size_t start1 = static_cast<std::size_t>(rng_.below(n_));
        for (std::size_t k = 0; k < n_; ++k) {
            const std::size_t i1 = (start1 + k) % n_;
            if (alpha_[i1] > 0.0 && alpha_[i1] < c_ && take_step(i1, i2)) return 1;
        }
        // Heuristic 3: anything from a random start.
        const std::size_t start2 = static_cast<std::size_t>(rng_.below(n_));
        for (std::size_t k = 0; k < n_; ++k) {
            const std::size_t i1 = (start2 + k) % n_;
            if (take_step(i1, i2)) return 1;
        }
        return 0;
    }

    bool take_step(std::size_t i1, std::size_t i2) {
        if (i1 == i2) return false;
        const double a1 = alpha_[i1], a2 = alpha_[i2];
        const double y1 = ys_[i1], y2 = ys_[i2];
        const double e1 = errors_[i1], e2 = errors_[i2];
        const double s = y1 * y2;

        double lo, hi;
        if (y1 == y2) {
            lo = std::max(0.0, a1 + a2 - c_);
            hi = std::min(c_, a1 + a2);
        } else {
            lo = std::max(0.0, a2 - a1);
            hi = std::min(c_, c_ + a2 - a1);
        }
        if (lo >= hi) return false;

        const auto& row1 = row(i1);
        const auto& row2 = row(i2);
        const double k11 = row1[i1], k12 = row1[i2], k22 = row2[i2];
        const double eta = 2.0 * k12 - k11 - k22;

        double a2_new;
        if (eta < 0.0) {
            a2_new = a2 - y2 * (e1 - e2) / eta;
            a2_new = std::clamp(a2_new, lo, hi);
        } else {
            // Flat or degenerate direction (duplicated points): compare the
            // dual objective at both ends of the feasible segment.
            const double gamma_sum = a1 + s * a2;
            const double v1 = e1 + y1 - b_ - y1 * a1 * k11 - y2 * a2 * k12;
            const double v2 = e2 + y2 - b_ - y1 * a1 * k12 - y2 * a2 * k22;
            auto objective = [&](double a2v) {
                const double a1v = gamma_sum - s * a2v;
                return a1v + a2v - 0.5 * k11 * a1v * a1v - 0.5 * k22 * a2v * a2v -
                       s * k12 * a1v * a2v - y1 * a1v * v1 - y2 * a2v * v2;
            };
            const double obj_lo = objective(lo);
            const double obj_hi = objective(hi);
            if (obj_lo > obj_hi + 1e-12)
                a2_new = lo;
            else if (obj_hi > obj_lo + 1e-12)
                a2_new = hi;
            else
                return false;
        }

        if (a2_new < 1e-8) a2_new = 0.0;
        else if (a2_new > c_ - 1e-8) a2_new = c_;
        if (std::fabs(a2_new - a2) < 1e-5 * (a2_new + a2 + 1e-5)) return false;

        double a1_new = a1 + s * (a2 - a2_new);
        if (a1_new < 1e-8) a1_new = 0.0;
        else if (a1_new > c_ - 1e-8) a1_new = c_;

        const double d1 = y1 * (a1_new - a1);
        const double d2 = y2 * (a2_new - a2);
        const double b1 = b_ - e1 - d1 * k11 - d2 * k12;
        const double b2 = b_ - e2 - d1 * k12 - d2 * k22;
        double b_new;
        if (a1_new > 0.0 && a1_new < c_)
            b_new = b1;
        else if (a2_new > 0.0 && a2_new < c_)
            b_new = b2;
        else
            b_new = 0.5 * (b1 + b2);

        for (std::size_t i = 0; i < n_; ++i)
            errors_[i] += d1 * row1[i] + d2 * row2[i] + (b_new - b_);

        alpha_[i1] = a1_new;
        alpha_[i2] = a2_new;
        b_ = b_new;
        return true;
    }

    std::span<const FeatureVector> xs_;
    std::span<const double> ys_;
    std::size_t n_;
    double c_, gamma_, tol_;
    std::size_t max_passes_;
    Rng rng_;
    std::vector<double> alpha_;
    std::vector<double> errors_;
    double b_ = 0.0;
    std::vector<std::vector<double>> rows_;
    std::vector<bool> row_ready_;
};

}  // namespace

SvmModel train_smo(std::span<const FeatureVector> xs, std::span<const Label> ys,
                   const TrainConfig& cfg, std::vector<double>* alphas_out) {
    if (xs.size() != ys.size()) throw Error("labels and vectors differ in count");
    if (xs.size() < 2) throw Error("both classes required");
    const std::size_t dim = xs[0].size();
    for (const auto& x : xs)
        if (x.size() != dim) throw Error("dimension mismatch in training set");

    bool has_pos = false, has_neg = false;
    std::vector<double> y(xs.size());
    for (std::size_t i = 0; i < ys.size(); ++i) {
        y[i] = label_sign(ys[i]);
        (y[i] > 0 ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) throw Error("both classes required");
    if (!(cfg.c > 0.0)) throw Error("box constraint must be positive");
    if (!(cfg.kkt_tol > 0.0)) throw Error("tolerance must be positive");

    const double gamma = cfg.gamma ? *cfg.gamma : 1.0 / static_cast<double>(dim);
    if (!(gamma > 0.0)) throw Error("gamma must be positive");

    SmoSolver solver(xs, y, cfg.c, gamma, cfg.kkt_tol, cfg.max_passes, cfg.seed);
    solver.solve();

    SvmModel model;
    model.gamma = gamma;
    model.c = cfg.c;
    model.bias = solver.bias();
    const auto& alpha = solver.alphas();
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (alpha[i] > 0.0) {
            model.support_vectors.push_back(xs[i]);
            model.coeffs.push_back(alpha[i] * y[i]);
        }
    }
    if (alphas_out) *alphas_out = alpha;
    return model;
}

double decision(const SvmModel& model, const FeatureVector& x) {
    double f = model.bias;
    for (std::size_t i = 0; i < model.support_vectors.size(); ++i)
        f += model.coeffs[i] * rbf_kernel(model.support_vectors[i], x, model.gamma);
    return f;
}

Label predict(const SvmModel& model, const FeatureVector& x) {
    return decision(model, x) < 0.0 ? Label::Fall : Label::Adl;
}

}  // namespace falldet
