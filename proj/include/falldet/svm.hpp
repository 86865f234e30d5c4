#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "falldet/types.hpp"

namespace falldet {

// Supervised baseline: binary RBF-kernel SVM trained with a Platt-style
// sequential minimal optimization solver (two-multiplier working sets,
// error cache, on-demand kernel rows). Class convention is fixed
// project-wide: ADL = +1, fall = -1; a decision value of exactly zero
// predicts ADL.

struct SvmModel {
    std::vector<FeatureVector> support_vectors;
    std::vector<double> coeffs;  // alpha_i * y_i, parallel to support_vectors
    double bias = 0.0;
    double gamma = 1.0;
    double c = 1.0;  // box constraint used in training
};

struct TrainConfig {
    double c = 1.0;
    std::optional<double> gamma;  // unset: 1 / dimension
    double kkt_tol = 1e-3;
    std::size_t max_passes = 100;
    std::uint64_t seed = 1;
};

/// exp(-gamma * |a - b|^2), in (0, 1].
double rbf_kernel(const FeatureVector& a, const FeatureVector& b, double gamma);

/// Trains on labelled vectors; both classes must be present. Deterministic
/// for a fixed config seed. alphas_out, when given, receives the full
/// multiplier vector (used by the KKT checks).
SvmModel train_smo(std::span<const FeatureVector> xs, std::span<const Label> ys,
                   const TrainConfig& cfg, std::vector<double>* alphas_out = nullptr);

/// Kernel expansion plus bias.
double decision(const SvmModel& model, const FeatureVector& x);

/// Sign of the decision value; exactly zero resolves to ADL.
Label predict(const SvmModel& model, const FeatureVector& x);

inline double label_sign(Label l) { return l == Label::Adl ? 1.0 : -1.0; }

}  // namespace falldet
