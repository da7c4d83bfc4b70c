#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tanklab/tensor.hpp"

namespace tanklab::sindy {

/// One named candidate function over the state vector.
struct LibraryTerm {
    std::string name;
    std::function<double(const std::vector<double>&)> fn;
};

/// Feature families for build_library.
struct LibrarySpec {
    int poly_degree = 2;           // monomials up to this total degree (0 = constant only)
    bool trig = true;              // sin(x_i), cos(x_i)
    bool pairwise_signed_sqrt = true;  // sign(x_i-x_j)sqrt|x_i-x_j|, i<j
    bool unary_signed_sqrt = true;     // sign(x_i)sqrt|x_i|
};

/// Ordered candidate set; column j of the feature matrix is terms[j].
/// var_names/spec record how build_library produced it (used by the JSON
/// round trip to reconstruct the function objects).
struct CandidateLibrary {
    std::vector<LibraryTerm> terms;
    std::size_t dim = 0;  // state dimension the terms expect
    std::vector<std::string> var_names;
    LibrarySpec spec;

    std::size_t size() const { return terms.size(); }
};

/// Exponent vectors of the monomials of total degree 1..degree over `dim`
/// variables, in library order (degree ascending, first variable's exponent
/// descending within a degree, and so on).
std::vector<std::vector<int>> monomial_exponents(std::size_t dim, int degree);

/// Candidate library over `var_names.size()` state variables. Term order:
/// constant, monomials by total degree (graded-lex), sin, cos, pairwise
/// signed-sqrt, unary signed-sqrt.
CandidateLibrary build_library(const std::vector<std::string>& var_names, const LibrarySpec& spec);

/// Feature matrix: row i holds every term evaluated at state row i.
nn::Tensor build_theta(const nn::Tensor& x, const CandidateLibrary& lib);

struct StlsqOptions {
    double threshold = 0.1;  // applied to unit-RMS-normalized coefficients
    int iterations = 10;
    double ridge = 1e-6;
};

/// Sparse coefficient matrix (p x m) with an exact-zero mask.
struct Xi {
    nn::Tensor values;
    std::vector<bool> active;  // row-major p x m
    bool rank_warning = false;

    bool is_active(std::size_t term, std::size_t dim) const {
        return active[term * values.cols() + dim];
    }
};

/// Sequentially thresholded least squares. Columns of theta are normalized
/// to unit RMS for thresholding; the active set never grows; the final
/// coefficients are a plain least-squares refit on the surviving support
/// (minimum-norm with a diagnostic warning if the support is rank-deficient).
Xi stlsq(const nn::Tensor& theta, const nn::Tensor& xdot, const StlsqOptions& opt = {});

struct FitDiagnostics {
    std::vector<double> relative_residual;  // per output dimension
    std::vector<std::size_t> active_terms;  // per output dimension
    bool rank_warning = false;
};

struct SindyModel {
    CandidateLibrary library;
    Xi xi;
    std::size_t state_dim = 0;
    FitDiagnostics diagnostics;
};

/// Fits xdot ~ theta(x) * Xi and records per-equation diagnostics.
SindyModel fit_sindy(const nn::Tensor& x, const nn::Tensor& xdot, const CandidateLibrary& lib,
                     const StlsqOptions& opt = {});

/// The negative-control gate: every equation needs relative residual below
/// `residual_bound` and at most `max_terms` active terms.
bool sparse_fit_accepted(const SindyModel& model, double residual_bound = 1e-3,
                         std::size_t max_terms = 4);

/// RK4 integration of xdot = theta(x) * Xi from x0. Throws IntegrationError
/// with the step index if the state escapes `escape_bound`.
std::vector<std::vector<double>> simulate_identified(const SindyModel& model,
                                                     const std::vector<double>& x0, double dt,
                                                     long steps, double escape_bound = 1e6);

struct ActiveTerm {
    std::size_t output_dim;
    std::string name;
    double coefficient;
};

/// Nonzero coefficients in (output dim, library order), for rendering.
std::vector<ActiveTerm> active_terms(const SindyModel& model);

/// One line per state derivative, e.g. "dx1/dt = -1*ssq(x1-x2)".
std::string render_equations(const SindyModel& model,
                             const std::vector<std::string>& var_names);

/// JSON export/import of library names, coefficients, mask, diagnostics.
/// Import rebuilds term functions from names, so only terms produced by
/// build_library round-trip.
nlohmann::json sindy_to_json(const SindyModel& model);
SindyModel sindy_from_json(const nlohmann::json& j);

}  // namespace tanklab::sindy
