#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tanklab/tensor.hpp"

namespace tanklab::metrics {

/// Sample Pearson coefficient. Throws DomainError on length mismatch,
/// fewer than two samples, or zero variance in either input.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

/// Concepts x latents correlation table. Cells whose latent column has zero
/// variance are recorded as missing (NaN) and excluded from the assignment.
struct CorrelationReport {
    nn::Tensor r;                           // (concepts x latents), NaN = missing
    std::vector<std::size_t> best_latent;   // argmax |r| per concept row
    std::vector<double> best_abs_r;
    std::vector<bool> missing_cells;        // row-major flags matching r
};

/// Fig.-4/6-style analysis: full signed correlation matrix plus the
/// per-concept best-latent assignment (lowest index wins ties).
CorrelationReport correlation_matrix(const nn::Tensor& latents, const nn::Tensor& concepts);

/// Mean over concepts of (|r| at the assigned latent minus the largest
/// off-assignment |r| in the same row), clipped to [0, 1]. Missing cells do
/// not compete; a fully missing row contributes 0.
double disentanglement_score(const CorrelationReport& report);

/// Normalized mutual information with arithmetic-mean normalization,
/// 2*I(a;b) / (H(a)+H(b)). Single-class (zero entropy) input yields 0.
double nmi(const std::vector<int>& predicted, const std::vector<int>& truth);

/// A(lag) = fraction of positions t with states[t] == states[t+lag].
double state_autocorrelation(const std::vector<int>& states, std::size_t lag);

/// Peak prominence of A at the cycle length against the half-cycle
/// sidelobes: A(cycle) - (A(cycle/2) + A(3*cycle/2)) / 2.
double cycle_prominence(const std::vector<int>& states, std::size_t cycle);

/// Shift of `truth` (delayed by d steps) that maximizes NMI against
/// `predicted`, searched over d in [0, max_lag]; smallest maximizer wins.
long best_lag(const std::vector<int>& predicted, const std::vector<int>& truth, long max_lag);

/// ||pred - truth||_F^2 / ||truth - column_means(truth)||_F^2.
double relative_trajectory_mse(const nn::Tensor& pred, const nn::Tensor& truth);

double median(std::vector<double> values);

}  // namespace tanklab::metrics
