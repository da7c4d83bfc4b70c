#include "tanklab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <utility>

#include "tanklab/errors.hpp"

namespace tanklab::metrics {

namespace {

struct Moments {
    double mean = 0.0;
    double var = 0.0;  // uncentered by n (population); only ratios are used
};

Moments column_moments(const nn::Tensor& t, std::size_t j) {
    const std::size_t n = t.rows();
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += t(i, j);
    Moments m;
    m.mean = sum / static_cast<double>(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = t(i, j) - m.mean;
        acc += d * d;
    }
    m.var = acc / static_cast<double>(n);
    return m;
}

double entropy(const std::map<int, std::size_t>& counts, double n) {
    double h = 0.0;
    for (const auto& [label, c] : counts) {
        (void)label;
        const double p = static_cast<double>(c) / n;
        h -= p * std::log(p);
    }
    return h;
}

}  // namespace

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size())
        throw DomainError("pearson: length mismatch " + std::to_string(x.size()) + " vs " +
                          std::to_string(y.size()));
    if (x.size() < 2) throw DomainError("pearson: need at least 2 samples");
    const double n = static_cast<double>(x.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0;
    double syy = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw DomainError("pearson: zero variance input");
    return sxy / std::sqrt(sxx * syy);
}

CorrelationReport correlation_matrix(const nn::Tensor& latents, const nn::Tensor& concepts) {
    if (latents.rows() != concepts.rows())
        throw DomainError("correlation_matrix: row mismatch " + std::to_string(latents.rows()) +
                          " vs " + std::to_string(concepts.rows()));
    if (latents.rows() < 2) throw DomainError("correlation_matrix: need at least 2 rows");
    const std::size_t n = latents.rows();
    const std::size_t nc = concepts.cols();
    const std::size_t m = latents.cols();

    std::vector<Moments> cm(nc);
    std::vector<Moments> lm(m);
    for (std::size_t c = 0; c < nc; ++c) cm[c] = column_moments(concepts, c);
    for (std::size_t j = 0; j < m; ++j) lm[j] = column_moments(latents, j);

    CorrelationReport rep;
    rep.r = nn::Tensor(nc, m);
    rep.missing_cells.assign(nc * m, false);
    for (std::size_t c = 0; c < nc; ++c) {
        for (std::size_t j = 0; j < m; ++j) {
            if (cm[c].var == 0.0 || lm[j].var == 0.0) {
                rep.r(c, j) = std::numeric_limits<double>::quiet_NaN();
                rep.missing_cells[c * m + j] = true;
                continue;
            }
            double sxy = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                sxy += (concepts(i, c) - cm[c].mean) * (latents(i, j) - lm[j].mean);
            rep.r(c, j) = (sxy / static_cast<double>(n)) / std::sqrt(cm[c].var * lm[j].var);
        }
    }

    rep.best_latent.assign(nc, 0);
    rep.best_abs_r.assign(nc, 0.0);
    for (std::size_t c = 0; c < nc; ++c) {
        double best = -1.0;
        std::size_t arg = 0;
        for (std::size_t j = 0; j < m; ++j) {
            if (rep.missing_cells[c * m + j]) continue;
            const double a = std::fabs(rep.r(c, j));
            if (a > best) {
                best = a;
                arg = j;
            }
        }
        rep.best_latent[c] = arg;
        rep.best_abs_r[c] = std::max(best, 0.0);
    }
    return rep;
}

double disentanglement_score(const CorrelationReport& report) {
    const std::size_t nc = report.r.rows();
    const std::size_t m = report.r.cols();
    if (nc == 0) throw DomainError("disentanglement_score: empty report");
    double total = 0.0;
    for (std::size_t c = 0; c < nc; ++c) {
        double runner_up = 0.0;
        bool any = false;
        for (std::size_t j = 0; j < m; ++j) {
            if (report.missing_cells[c * m + j]) continue;
            any = true;
            if (j == report.best_latent[c]) continue;
            runner_up = std::max(runner_up, std::fabs(report.r(c, j)));
        }
        if (!any) continue;  // fully missing row contributes 0
        total += report.best_abs_r[c] - runner_up;
    }
    return std::clamp(total / static_cast<double>(nc), 0.0, 1.0);
}

double nmi(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.size() != truth.size())
        throw DomainError("nmi: length mismatch " + std::to_string(predicted.size()) + " vs " +
                          std::to_string(truth.size()));
    if (predicted.empty()) throw DomainError("nmi: empty input");
    const double n = static_cast<double>(predicted.size());

    std::map<int, std::size_t> ca;
    std::map<int, std::size_t> cb;
    std::map<std::pair<int, int>, std::size_t> joint;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        ++ca[predicted[i]];
        ++cb[truth[i]];
        ++joint[{predicted[i], truth[i]}];
    }
    const double ha = entropy(ca, n);
    const double hb = entropy(cb, n);
    if (ha == 0.0 || hb == 0.0) return 0.0;

    double mi = 0.0;
    for (const auto& [pair, c] : joint) {
        const double pab = static_cast<double>(c) / n;
        const double pa = static_cast<double>(ca.at(pair.first)) / n;
        const double pb = static_cast<double>(cb.at(pair.second)) / n;
        mi += pab * std::log(pab / (pa * pb));
    }
    return std::clamp(2.0 * mi / (ha + hb), 0.0, 1.0);
}

double state_autocorrelation(const std::vector<int>& states, std::size_t lag) {
    if (lag == 0 || lag >= states.size())
        throw DomainError("state_autocorrelation: lag " + std::to_string(lag) +
                          " out of range for length " + std::to_string(states.size()));
    std::size_t hits = 0;
    const std::size_t span = states.size() - lag;
    for (std::size_t t = 0; t < span; ++t)
        if (states[t] == states[t + lag]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(span);
}

double cycle_prominence(const std::vector<int>& states, std::size_t cycle) {
    const double peak = state_autocorrelation(states, cycle);
    const double left = state_autocorrelation(states, cycle / 2);
    const double right = state_autocorrelation(states, cycle + cycle / 2);
    return peak - 0.5 * (left + right);
}

long best_lag(const std::vector<int>& predicted, const std::vector<int>& truth, long max_lag) {
    if (predicted.size() != truth.size())
        throw DomainError("best_lag: length mismatch");
    if (max_lag < 0 || static_cast<std::size_t>(max_lag) + 1 >= predicted.size())
        throw DomainError("best_lag: max_lag " + std::to_string(max_lag) +
                          " out of range for length " + std::to_string(predicted.size()));
    long arg = 0;
    double best = -1.0;
    for (long d = 0; d <= max_lag; ++d) {
        std::vector<int> a(predicted.begin() + d, predicted.end());
        std::vector<int> b(truth.begin(), truth.end() - d);
        const double v = nmi(a, b);
        if (v > best) {
            best = v;
            arg = d;
        }
    }
    return arg;
}

double relative_trajectory_mse(const nn::Tensor& pred, const nn::Tensor& truth) {
    if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
        throw DomainError("relative_trajectory_mse: shape mismatch " + pred.shape_str() + " vs " +
                          truth.shape_str());
    if (truth.rows() < 2) throw DomainError("relative_trajectory_mse: need at least 2 rows");
    double num = 0.0;
    for (std::size_t i = 0; i < pred.rows(); ++i)
        for (std::size_t j = 0; j < pred.cols(); ++j) {
            const double d = pred(i, j) - truth(i, j);
            num += d * d;
        }
    double den = 0.0;
    for (std::size_t j = 0; j < truth.cols(); ++j) {
        const Moments m = column_moments(truth, j);
        den += m.var * static_cast<double>(truth.rows());
    }
    if (den == 0.0) throw DomainError("relative_trajectory_mse: constant reference trajectory");
    return num / den;
}

double median(std::vector<double> values) {
    if (values.empty()) throw DomainError("median: empty input");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace tanklab::metrics
