#include "tanklab/sindy.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <cstdio>
#include <limits>

#include "tanklab/errors.hpp"
#include "tanklab/sim.hpp"

namespace tanklab::sindy {

namespace {

double signed_sqrt(double x) { return sim::signed_sqrt(x); }

std::string monomial_name(const std::vector<std::string>& vars, const std::vector<int>& expo) {
    std::string name;
    for (std::size_t v = 0; v < vars.size(); ++v) {
        if (expo[v] == 0) continue;
        if (!name.empty()) name += "*";
        name += vars[v];
        if (expo[v] > 1) name += "^" + std::to_string(expo[v]);
    }
    return name;
}

void enumerate_degree(std::size_t dim, std::size_t pos, int remaining, std::vector<int>& cur,
                      std::vector<std::vector<int>>& out) {
    if (pos + 1 == dim) {
        cur[pos] = remaining;
        out.push_back(cur);
        return;
    }
    for (int e = remaining; e >= 0; --e) {
        cur[pos] = e;
        enumerate_degree(dim, pos + 1, remaining - e, cur, out);
    }
}

}  // namespace

std::vector<std::vector<int>> monomial_exponents(std::size_t dim, int degree) {
    if (dim == 0) throw DomainError("monomial_exponents: zero dimension");
    std::vector<std::vector<int>> out;
    std::vector<int> cur(dim, 0);
    for (int d = 1; d <= degree; ++d) enumerate_degree(dim, 0, d, cur, out);
    return out;
}

CandidateLibrary build_library(const std::vector<std::string>& var_names,
                               const LibrarySpec& spec) {
    if (var_names.empty()) throw DomainError("build_library: no variables");
    if (spec.poly_degree < 0) throw DomainError("build_library: negative polynomial degree");
    const std::size_t dim = var_names.size();

    CandidateLibrary lib;
    lib.dim = dim;
    lib.var_names = var_names;
    lib.spec = spec;

    lib.terms.push_back({"1", [](const std::vector<double>&) { return 1.0; }});
    for (const auto& e : monomial_exponents(dim, spec.poly_degree)) {
        lib.terms.push_back({monomial_name(var_names, e), [e](const std::vector<double>& x) {
                                 double v = 1.0;
                                 for (std::size_t i = 0; i < e.size(); ++i)
                                     for (int k = 0; k < e[i]; ++k) v *= x[i];
                                 return v;
                             }});
    }
    if (spec.trig) {
        for (std::size_t i = 0; i < dim; ++i)
            lib.terms.push_back({"sin(" + var_names[i] + ")",
                                 [i](const std::vector<double>& x) { return std::sin(x[i]); }});
        for (std::size_t i = 0; i < dim; ++i)
            lib.terms.push_back({"cos(" + var_names[i] + ")",
                                 [i](const std::vector<double>& x) { return std::cos(x[i]); }});
    }
    if (spec.pairwise_signed_sqrt) {
        for (std::size_t i = 0; i < dim; ++i)
            for (std::size_t j = i + 1; j < dim; ++j)
                lib.terms.push_back({"ssq(" + var_names[i] + "-" + var_names[j] + ")",
                                     [i, j](const std::vector<double>& x) {
                                         return signed_sqrt(x[i] - x[j]);
                                     }});
    }
    if (spec.unary_signed_sqrt) {
        for (std::size_t i = 0; i < dim; ++i)
            lib.terms.push_back({"ssq(" + var_names[i] + ")", [i](const std::vector<double>& x) {
                                     return signed_sqrt(x[i]);
                                 }});
    }
    return lib;
}

nn::Tensor build_theta(const nn::Tensor& x, const CandidateLibrary& lib) {
    if (x.cols() != lib.dim)
        throw ShapeError("build_theta: state dim " + std::to_string(x.cols()) +
                         " != library dim " + std::to_string(lib.dim));
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!std::isfinite(x[i])) throw DomainError("build_theta: non-finite state entry");

    nn::Tensor theta(x.rows(), lib.size());
    std::vector<double> row(lib.dim);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t v = 0; v < lib.dim; ++v) row[v] = x(i, v);
        for (std::size_t j = 0; j < lib.size(); ++j) theta(i, j) = lib.terms[j].fn(row);
    }
    return theta;
}

Xi stlsq(const nn::Tensor& theta, const nn::Tensor& xdot, const StlsqOptions& opt) {
    if (theta.rows() != xdot.rows())
        throw ShapeError("stlsq: row mismatch " + std::to_string(theta.rows()) + " vs " +
                         std::to_string(xdot.rows()));
    if (theta.rows() == 0) throw DomainError("stlsq: empty data");
    if (opt.threshold < 0.0) throw DomainError("stlsq: negative threshold");
    if (opt.iterations < 1) throw DomainError("stlsq: iterations must be >= 1");
    if (opt.ridge < 0.0) throw DomainError("stlsq: negative ridge");

    const std::size_t s = theta.rows();
    const std::size_t p = theta.cols();
    const std::size_t m = xdot.cols();

    std::vector<double> scale(p, 0.0);
    Eigen::MatrixXd raw(s, p);
    Eigen::MatrixXd norm(s, p);
    for (std::size_t j = 0; j < p; ++j) {
        double ss = 0.0;
        for (std::size_t i = 0; i < s; ++i) {
            raw(i, j) = theta(i, j);
            ss += theta(i, j) * theta(i, j);
        }
        scale[j] = std::sqrt(ss / static_cast<double>(s));
        for (std::size_t i = 0; i < s; ++i)
            norm(i, j) = scale[j] > 0.0 ? raw(i, j) / scale[j] : 0.0;
    }

    Xi out;
    out.values = nn::Tensor(p, m);
    out.active.assign(p * m, false);

    for (std::size_t d = 0; d < m; ++d) {
        Eigen::VectorXd b(s);
        for (std::size_t i = 0; i < s; ++i) b(static_cast<Eigen::Index>(i)) = xdot(i, d);

        std::vector<std::size_t> active;
        for (std::size_t j = 0; j < p; ++j)
            if (scale[j] > 0.0) active.push_back(j);

        for (int it = 0; it < opt.iterations && !active.empty(); ++it) {
            const auto k = static_cast<Eigen::Index>(active.size());
            Eigen::MatrixXd A(s, k);
            for (Eigen::Index c = 0; c < k; ++c)
                A.col(c) = norm.col(static_cast<Eigen::Index>(active[static_cast<std::size_t>(c)]));
            Eigen::MatrixXd gram = A.transpose() * A;
            gram.diagonal().array() += opt.ridge;
            Eigen::VectorXd w = gram.ldlt().solve(A.transpose() * b);

            std::vector<std::size_t> keep;
            for (Eigen::Index c = 0; c < k; ++c)
                if (std::fabs(w(c)) >= opt.threshold) keep.push_back(active[static_cast<std::size_t>(c)]);
            if (keep.size() == active.size()) break;
            active = std::move(keep);
        }

        if (active.empty()) continue;

        // plain least-squares refit on the surviving support
        const auto k = static_cast<Eigen::Index>(active.size());
        Eigen::MatrixXd A(s, k);
        for (Eigen::Index c = 0; c < k; ++c)
            A.col(c) = raw.col(static_cast<Eigen::Index>(active[static_cast<std::size_t>(c)]));
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
        Eigen::VectorXd w;
        if (qr.rank() < k) {
            out.rank_warning = true;
            w = A.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(b);
        } else {
            w = qr.solve(b);
        }
        for (Eigen::Index c = 0; c < k; ++c) {
            const std::size_t j = active[static_cast<std::size_t>(c)];
            out.values(j, d) = w(c);
            out.active[j * m + d] = true;
        }
    }
    return out;
}

SindyModel fit_sindy(const nn::Tensor& x, const nn::Tensor& xdot, const CandidateLibrary& lib,
                     const StlsqOptions& opt) {
    if (x.rows() != xdot.rows() || x.cols() != xdot.cols())
        throw ShapeError("fit_sindy: x " + x.shape_str() + " vs xdot " + xdot.shape_str());

    SindyModel model;
    model.library = lib;
    model.state_dim = x.cols();
    nn::Tensor theta = build_theta(x, lib);
    model.xi = stlsq(theta, xdot, opt);
    model.diagnostics.rank_warning = model.xi.rank_warning;

    const std::size_t m = xdot.cols();
    model.diagnostics.relative_residual.assign(m, 0.0);
    model.diagnostics.active_terms.assign(m, 0);
    for (std::size_t d = 0; d < m; ++d) {
        double res = 0.0;
        double ref = 0.0;
        for (std::size_t i = 0; i < x.rows(); ++i) {
            double fit = 0.0;
            for (std::size_t j = 0; j < lib.size(); ++j)
                if (model.xi.is_active(j, d)) fit += theta(i, j) * model.xi.values(j, d);
            const double r = fit - xdot(i, d);
            res += r * r;
            ref += xdot(i, d) * xdot(i, d);
        }
        if (ref > 0.0)
            model.diagnostics.relative_residual[d] = std::sqrt(res / ref);
        else
            model.diagnostics.relative_residual[d] =
                res > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
        std::size_t count = 0;
        for (std::size_t j = 0; j < lib.size(); ++j)
            if (model.xi.is_active(j, d)) ++count;
        model.diagnostics.active_terms[d] = count;
    }
    return model;
}

bool sparse_fit_accepted(const SindyModel& model, double residual_bound, std::size_t max_terms) {
    for (std::size_t d = 0; d < model.diagnostics.relative_residual.size(); ++d) {
        if (!(model.diagnostics.relative_residual[d] <= residual_bound)) return false;
        if (model.diagnostics.active_terms[d] > max_terms) return false;
    }
    return true;
}

std::vector<std::vector<double>> simulate_identified(const SindyModel& model,
                                                     const std::vector<double>& x0, double dt,
                                                     long steps, double escape_bound) {
    if (x0.size() != model.state_dim)
        throw ShapeError("simulate_identified: x0 dim " + std::to_string(x0.size()) +
                         " != model dim " + std::to_string(model.state_dim));
    const std::size_t m = model.state_dim;
    const auto& lib = model.library;
    const auto& xi = model.xi;
    sim::VectorField f = [&lib, &xi, m](const std::vector<double>& x) {
        std::vector<double> dx(m, 0.0);
        for (std::size_t j = 0; j < lib.size(); ++j) {
            bool used = false;
            for (std::size_t d = 0; d < m; ++d)
                if (xi.is_active(j, d)) used = true;
            if (!used) continue;
            const double tj = lib.terms[j].fn(x);
            for (std::size_t d = 0; d < m; ++d)
                if (xi.is_active(j, d)) dx[d] += tj * xi.values(j, d);
        }
        return dx;
    };
    return sim::integrate_rk4(f, x0, dt, steps, escape_bound);
}

std::vector<ActiveTerm> active_terms(const SindyModel& model) {
    std::vector<ActiveTerm> out;
    for (std::size_t d = 0; d < model.state_dim; ++d)
        for (std::size_t j = 0; j < model.library.size(); ++j)
            if (model.xi.is_active(j, d))
                out.push_back({d, model.library.terms[j].name, model.xi.values(j, d)});
    return out;
}

std::string render_equations(const SindyModel& model, const std::vector<std::string>& var_names) {
    if (var_names.size() != model.state_dim)
        throw ShapeError("render_equations: need " + std::to_string(model.state_dim) + " names");
    std::string text;
    char buf[64];
    for (std::size_t d = 0; d < model.state_dim; ++d) {
        text += "d" + var_names[d] + "/dt =";
        bool first = true;
        for (std::size_t j = 0; j < model.library.size(); ++j) {
            if (!model.xi.is_active(j, d)) continue;
            const double c = model.xi.values(j, d);
            std::snprintf(buf, sizeof buf, "%.6g", std::fabs(c));
            text += first ? (c < 0 ? " -" : " ") : (c < 0 ? " - " : " + ");
            text += buf;
            if (model.library.terms[j].name != "1") text += "*" + model.library.terms[j].name;
            first = false;
        }
        if (first) text += " 0";
        text += "\n";
    }
    return text;
}

nlohmann::json sindy_to_json(const SindyModel& model) {
    nlohmann::json j;
    j["kind"] = "sindy-model-v1";
    j["state_dim"] = model.state_dim;
    j["library"]["var_names"] = model.library.var_names;
    j["library"]["spec"] = {{"poly_degree", model.library.spec.poly_degree},
                            {"trig", model.library.spec.trig},
                            {"pairwise_signed_sqrt", model.library.spec.pairwise_signed_sqrt},
                            {"unary_signed_sqrt", model.library.spec.unary_signed_sqrt}};
    std::vector<std::string> names;
    for (const auto& t : model.library.terms) names.push_back(t.name);
    j["library"]["names"] = names;

    std::vector<std::vector<double>> values(model.xi.values.rows());
    for (std::size_t r = 0; r < model.xi.values.rows(); ++r)
        for (std::size_t c = 0; c < model.xi.values.cols(); ++c)
            values[r].push_back(model.xi.values(r, c));
    j["xi"] = values;
    j["active"] = model.xi.active;
    j["diagnostics"] = {{"relative_residual", model.diagnostics.relative_residual},
                        {"active_terms", model.diagnostics.active_terms},
                        {"rank_warning", model.diagnostics.rank_warning}};
    return j;
}

SindyModel sindy_from_json(const nlohmann::json& j) {
    if (!j.contains("kind") || j["kind"] != "sindy-model-v1")
        throw SchemaError("sindy_from_json: not a sindy-model-v1 document");
    try {
        SindyModel model;
        model.state_dim = j.at("state_dim").get<std::size_t>();
        const auto& lj = j.at("library");
        LibrarySpec spec;
        spec.poly_degree = lj.at("spec").at("poly_degree").get<int>();
        spec.trig = lj.at("spec").at("trig").get<bool>();
        spec.pairwise_signed_sqrt = lj.at("spec").at("pairwise_signed_sqrt").get<bool>();
        spec.unary_signed_sqrt = lj.at("spec").at("unary_signed_sqrt").get<bool>();
        model.library = build_library(lj.at("var_names").get<std::vector<std::string>>(), spec);
        const auto names = lj.at("names").get<std::vector<std::string>>();
        if (names.size() != model.library.size())
            throw SchemaError("sindy_from_json: term count mismatch");
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] != model.library.terms[i].name)
                throw SchemaError("sindy_from_json: term name mismatch at index " +
                                  std::to_string(i) + ": " + names[i]);

        const auto values = j.at("xi").get<std::vector<std::vector<double>>>();
        if (values.size() != model.library.size())
            throw SchemaError("sindy_from_json: xi row count mismatch");
        model.xi.values = nn::Tensor(values.size(), model.state_dim);
        for (std::size_t r = 0; r < values.size(); ++r) {
            if (values[r].size() != model.state_dim)
                throw SchemaError("sindy_from_json: xi column count mismatch");
            for (std::size_t c = 0; c < model.state_dim; ++c)
                model.xi.values(r, c) = values[r][c];
        }
        model.xi.active = j.at("active").get<std::vector<bool>>();
        if (model.xi.active.size() != model.xi.values.size())
            throw SchemaError("sindy_from_json: active mask size mismatch");
        const auto& dj = j.at("diagnostics");
        model.diagnostics.relative_residual = dj.at("relative_residual").get<std::vector<double>>();
        model.diagnostics.active_terms = dj.at("active_terms").get<std::vector<std::size_t>>();
        model.diagnostics.rank_warning = dj.at("rank_warning").get<bool>();
        model.xi.rank_warning = model.diagnostics.rank_warning;
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("sindy_from_json: ") + e.what());
    }
}

}  // namespace tanklab::sindy
