#include "tanklab/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "tanklab/csvio.hpp"
#include "tanklab/errors.hpp"
#include "tanklab/metrics.hpp"
#include "tanklab/rng.hpp"

namespace tanklab::cli {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kTagEvalIc = 0x45761c01;

constexpr long kResimSteps = 200;       // sindy re-simulation horizon
constexpr std::size_t kHeldOutIcs = 8;  // aesindy roundtrip trajectories
constexpr long kHeldOutSteps = 50;

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

void rename_into_place(const std::string& tmp, const std::string& path) {
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + tmp + " to " + path + ": " + ec.message());
}

void write_provenance(const RunConfig& cfg, const RunPaths& p) {
    ensure_dir(p.run_dir);
    write_json_atomic(p.config_copy, cfg.to_json());
}

void require_artifact(const std::string& path, const std::string& stage) {
    if (!fs::exists(path))
        throw MissingInputError(path + " not found; run `" + stage + "` first");
}

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

nn::Tensor rows_to_tensor(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw DomainError("rows_to_tensor: empty trajectory");
    nn::Tensor t(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) t(r, c) = rows[r][c];
    return t;
}

nn::Tensor trajectory_to_tensor(const sim::Trajectory& traj) {
    nn::Tensor t(traj.length(), 3);
    for (std::size_t r = 0; r < traj.length(); ++r) {
        t(r, 0) = traj.states[r].h1;
        t(r, 1) = traj.states[r].h2;
        t(r, 2) = traj.states[r].h3;
    }
    return t;
}

/// Rejects non-finite metric values so a broken run cannot masquerade as a
/// schema-valid bundle.
void check_finite(const nlohmann::json& bundle) {
    for (auto it = bundle.begin(); it != bundle.end(); ++it)
        if (it.value().is_number() && !std::isfinite(it.value().get<double>()))
            throw StateError("non-finite metric '" + it.key() + "'");
}

// ------------------------------------------------------------------ history

void write_history(const std::string& path, const std::vector<std::string>& header,
                   const std::vector<std::vector<double>>& rows) {
    const std::string tmp = path + ".tmp";
    io::CsvWriter w(tmp, header);
    for (const auto& r : rows) w.write(r);
    w.close();
    rename_into_place(tmp, path);
}

// ------------------------------------------------------- correlation shared

struct ConceptCorrelation {
    metrics::CorrelationReport report;
    double disentanglement = 0.0;
};

ConceptCorrelation concept_correlation(const nn::Tensor& latents, const nn::Tensor& concepts) {
    ConceptCorrelation out;
    out.report = metrics::correlation_matrix(latents, concepts);
    out.disentanglement = metrics::disentanglement_score(out.report);
    return out;
}

void add_correlation_keys(nlohmann::json& bundle, const ConceptCorrelation& cc,
                          double strong_threshold, const char* strong_key) {
    bundle["disentanglement"] = cc.disentanglement;
    int strong = 0;
    for (std::size_t c = 0; c < data::kConceptNames.size(); ++c) {
        bundle[std::string("best_abs_r_") + data::kConceptNames[c]] = cc.report.best_abs_r[c];
        if (cc.report.best_abs_r[c] >= strong_threshold) ++strong;
    }
    bundle[strong_key] = strong;
}

// ------------------------------------------------------------ train per run

nlohmann::json train_sindy(const RunConfig& cfg, const RunPaths& p) {
    const data::SindySet set = data::load_sindy_set(p.dataset);
    const SindyFitConfig fit = cfg.sindy_train();
    const sindy::CandidateLibrary lib =
        sindy::build_library({"h1", "h2", "h3"}, fit.library);
    Stopwatch timer;
    const sindy::SindyModel model = sindy::fit_sindy(set.x, set.xdot, lib, fit.stlsq);
    const double seconds = timer.seconds();
    write_json_atomic(p.checkpoint, sindy::sindy_to_json(model));
    return {{"train_seconds", seconds}};
}

nlohmann::json train_bvae(const RunConfig& cfg, const RunPaths& p) {
    const data::ConceptLabeledSet set = data::load_concept_set(p.dataset);
    Stopwatch timer;
    auto result = bvae::train_bvae(set, cfg.bvae_train());
    const double seconds = timer.seconds();
    write_json_atomic(p.checkpoint, bvae::bvae_checkpoint(result.model));
    std::vector<std::vector<double>> rows;
    for (std::size_t e = 0; e < result.history.size(); ++e)
        rows.push_back({static_cast<double>(e + 1), result.history[e].loss,
                        result.history[e].recon, result.history[e].kl});
    write_history(p.history, {"epoch", "loss", "recon", "kl"}, rows);
    const double initial = result.history.empty() ? 0.0 : result.history.front().loss;
    const double final_loss = result.history.empty() ? 0.0 : result.history.back().loss;
    return {{"train_seconds", seconds},
            {"elbo_initial", initial},
            {"elbo_final", final_loss},
            {"val_mse", result.val_mse},
            {"mean_predictor_mse", result.mean_predictor_mse}};
}

nlohmann::json train_agents(const RunConfig& cfg, const RunPaths& p) {
    const data::QASet set = data::load_qa_set(p.dataset);
    Stopwatch timer;
    auto result = agents::train_agents(set, cfg.agents_train());
    const double seconds = timer.seconds();
    write_json_atomic(p.checkpoint, agents::agents_checkpoint(result.model));
    std::vector<std::vector<double>> rows;
    for (std::size_t e = 0; e < result.history.size(); ++e) {
        const auto& h = result.history[e];
        rows.push_back({static_cast<double>(e + 1), h.loss, h.mse[0], h.mse[1], h.mse[2],
                        h.mse[3], h.comm, h.gamma});
    }
    write_history(p.history,
                  {"epoch", "loss", "mse_a1", "mse_a2", "mse_a3", "mse_a4", "comm", "gamma"},
                  rows);
    nlohmann::json stats = {
        {"train_seconds", seconds},
        {"final_loss", result.history.empty() ? 0.0 : result.history.back().loss},
        {"final_comm", result.history.empty() ? 0.0 : result.history.back().comm},
        {"final_gamma", result.history.empty() ? 0.0 : result.history.back().gamma}};
    for (std::size_t a = 0; a < result.val_mse.size(); ++a)
        stats["val_mse_a" + std::to_string(a + 1)] = result.val_mse[a];
    return stats;
}

nlohmann::json train_aesindy(const RunConfig& cfg, const RunPaths& p) {
    const data::LiftedSet set = data::load_lifted_set(p.dataset);
    Stopwatch timer;
    auto result = aesindy::train_aesindy(set, cfg.aesindy_train());
    const double seconds = timer.seconds();
    write_json_atomic(p.checkpoint, aesindy::aesindy_checkpoint(result.model));
    write_json_atomic(p.dynamics, aesindy::aesindy_dynamics_json(result.model));
    std::vector<std::vector<double>> rows;
    for (std::size_t e = 0; e < result.history.size(); ++e) {
        const auto& h = result.history[e];
        rows.push_back({static_cast<double>(e + 1), h.loss, h.terms.recon, h.terms.sindy_x,
                        h.terms.sindy_z, h.terms.l1, static_cast<double>(h.active_entries)});
    }
    write_history(p.history,
                  {"epoch", "loss", "recon", "sindy_x", "sindy_z", "l1", "active_entries"},
                  rows);
    const bool empty = result.history.empty();
    return {{"train_seconds", seconds},
            {"final_loss", empty ? 0.0 : result.history.back().loss},
            {"final_recon", empty ? 0.0 : result.history.back().terms.recon},
            {"final_sindy_x", empty ? 0.0 : result.history.back().terms.sindy_x},
            {"final_sindy_z", empty ? 0.0 : result.history.back().terms.sindy_z},
            {"final_l1", empty ? 0.0 : result.history.back().terms.l1}};
}

nlohmann::json train_somvae(const RunConfig& cfg, const RunPaths& p) {
    const data::StateSet set = data::load_state_set(p.dataset);
    Stopwatch timer;
    auto result = somvae::train_somvae(set, cfg.somvae_train());
    const double seconds = timer.seconds();
    write_json_atomic(p.checkpoint, somvae::somvae_checkpoint(result.model));
    std::vector<std::vector<double>> rows;
    for (std::size_t e = 0; e < result.history.size(); ++e) {
        const auto& h = result.history[e];
        rows.push_back({static_cast<double>(e + 1), h.loss, h.terms.recon_q, h.terms.recon_e,
                        h.terms.commitment, h.terms.som});
    }
    write_history(p.history, {"epoch", "loss", "recon_q", "recon_e", "commitment", "som"},
                  rows);
    std::size_t dead = 0;
    for (bool b : result.dead_states)
        if (b) ++dead;
    const bool empty = result.history.empty();
    return {{"train_seconds", seconds},
            {"final_loss", empty ? 0.0 : result.history.back().loss},
            {"final_recon_q", empty ? 0.0 : result.history.back().terms.recon_q},
            {"final_recon_e", empty ? 0.0 : result.history.back().terms.recon_e},
            {"final_commitment", empty ? 0.0 : result.history.back().terms.commitment},
            {"final_som", empty ? 0.0 : result.history.back().terms.som},
            {"dead_states", dead}};
}

// ------------------------------------------------------- evaluate per seed

/// Deterministic held-out initial condition inside the generator's box.
sim::SystemState held_out_ic(const data::SindyGenConfig& gen, std::uint64_t seed) {
    auto rng = make_rng(derive_seed(seed, kTagEvalIc));
    const auto [lo, hi] = gen.ic_box;
    return {lo + (hi - lo) * unit(rng), lo + (hi - lo) * unit(rng),
            lo + (hi - lo) * unit(rng)};
}

nlohmann::json evaluate_sindy(const RunConfig& cfg, const RunPaths& p) {
    const data::SindySet set = data::load_sindy_set(p.dataset);
    const sindy::SindyModel model =
        sindy::sindy_from_json(read_json_file(p.checkpoint, "train"));

    nlohmann::json bundle;
    bundle["dataset_rows"] = set.x.rows();
    for (std::size_t d = 0; d < 3; ++d) {
        const std::string suffix = "_h" + std::to_string(d + 1);
        bundle["relative_residual" + suffix] = model.diagnostics.relative_residual[d];
        bundle["active_terms" + suffix] = model.diagnostics.active_terms[d];
    }
    bundle["accepted"] = sindy::sparse_fit_accepted(model) ? 1 : 0;
    bundle["rank_warning"] = model.diagnostics.rank_warning ? 1 : 0;

    const sim::SystemState x0 = held_out_ic(cfg.sindy_gen(), cfg.seed);
    const sim::Trajectory truth = sim::simulate(x0, set.params, set.dt, kResimSteps);
    const auto pred =
        sindy::simulate_identified(model, {x0.h1, x0.h2, x0.h3}, set.dt, kResimSteps);
    bundle["resim_relative_mse"] =
        metrics::relative_trajectory_mse(rows_to_tensor(pred), trajectory_to_tensor(truth));
    return bundle;
}

nlohmann::json evaluate_bvae(const RunConfig& cfg, const RunPaths& p) {
    (void)cfg;
    const data::ConceptLabeledSet set = data::load_concept_set(p.dataset);
    bvae::BvaeModel model = bvae::bvae_from_checkpoint(read_json_file(p.checkpoint, "train"));

    const nn::Tensor feats = data::standardized_features(set.windows, set.scaler, set.eval_idx);
    const nn::Tensor concepts = data::select_rows(set.concepts, set.eval_idx);
    const nn::Tensor mu = bvae::encode_means(model, feats);
    const ConceptCorrelation cc = concept_correlation(mu, concepts);
    const std::vector<double> kl = bvae::per_dimension_kl(model, feats);
    const std::vector<bool> inactive = bvae::inactive_dimensions(kl);

    nlohmann::json bundle;
    const nlohmann::json stats = read_json_file(p.train_stats, "train");
    const double initial = stats.at("elbo_initial").get<double>();
    const double final_loss = stats.at("elbo_final").get<double>();
    bundle["elbo_drop_ratio"] = initial > 0.0 ? (initial - final_loss) / initial : 0.0;
    double min_kl = kl.empty() ? 0.0 : kl.front();
    std::size_t inactive_count = 0;
    for (std::size_t k = 0; k < kl.size(); ++k) {
        bundle["kl_dim_" + std::to_string(k + 1)] = kl[k];
        min_kl = std::min(min_kl, kl[k]);
        if (inactive[k]) ++inactive_count;
    }
    bundle["min_kl"] = min_kl;
    bundle["inactive_dims"] = inactive_count;
    add_correlation_keys(bundle, cc, 0.5, "strong_concepts_05");
    return bundle;
}

nlohmann::json evaluate_agents(const RunConfig& cfg, const RunPaths& p) {
    const data::QASet set = data::load_qa_set(p.dataset);
    agents::AgentsModel model =
        agents::agents_from_checkpoint(read_json_file(p.checkpoint, "train"));
    (void)cfg;

    const nn::Tensor feats =
        data::standardized_features(set.base.windows, set.base.scaler, set.base.eval_idx);
    const nn::Tensor concepts = data::select_rows(set.base.concepts, set.base.eval_idx);
    const nn::Tensor z = agents::latent_responses(model, feats);
    const ConceptCorrelation cc = concept_correlation(z, concepts);

    nlohmann::json bundle;
    add_correlation_keys(bundle, cc, 0.8, "strong_concepts_08");
    std::set<std::size_t> assigned(cc.report.best_latent.begin(), cc.report.best_latent.end());
    bundle["assignment_distinct"] = assigned.size() == cc.report.best_latent.size() ? 1 : 0;
    return bundle;
}

nlohmann::json evaluate_aesindy(const RunConfig& cfg, const RunPaths& p) {
    aesindy::AESindyModel model =
        aesindy::aesindy_from_checkpoint(read_json_file(p.checkpoint, "train"));

    data::SindyGenConfig gen = cfg.sindy_gen();
    gen.num_ic = kHeldOutIcs;
    gen.steps = kHeldOutSteps;
    gen.seed = derive_seed(cfg.seed, kTagEvalIc);
    const data::LiftedSet held_out = data::lift_dataset(data::gen_sindy_set(gen));

    std::vector<double> mses;
    const std::size_t block = static_cast<std::size_t>(gen.steps);
    for (std::size_t s = 0; s < gen.num_ic; ++s) {
        nn::Tensor traj(block, data::kLiftDim);
        for (std::size_t r = 0; r < block; ++r)
            for (std::size_t c = 0; c < data::kLiftDim; ++c)
                traj(r, c) = held_out.x(s * block + r, c);
        mses.push_back(aesindy::roundtrip_eval(model, traj, gen.dt).relative_mse);
    }

    nlohmann::json bundle;
    const nn::Tensor xi = model.effective_xi();
    std::size_t active = 0;
    std::size_t dims_active = 0;
    for (std::size_t d = 0; d < xi.cols(); ++d) {
        bool any = false;
        for (std::size_t j = 0; j < xi.rows(); ++j)
            if (xi(j, d) != 0.0) {
                ++active;
                any = true;
            }
        if (any) ++dims_active;
    }
    bundle["active_entries"] = active;
    bundle["latent_dims_active"] = dims_active;
    double worst = 0.0;
    for (double m : mses) worst = std::max(worst, m);
    bundle["roundtrip_median_mse"] = metrics::median(mses);
    bundle["roundtrip_max_mse"] = worst;
    return bundle;
}

nlohmann::json evaluate_somvae(const RunConfig& cfg, const RunPaths& p) {
    const data::StateSet set = data::load_state_set(p.dataset);
    somvae::SomVaeModel model =
        somvae::somvae_from_checkpoint(read_json_file(p.checkpoint, "train"));

    const somvae::StateTimeline timeline = somvae::predict_states(model, set);
    const data::StateGenConfig gen = cfg.state_gen();
    const std::size_t cycle = static_cast<std::size_t>(
        3 * (gen.fill_steps + gen.stop_steps + gen.mix_steps) + gen.drain_steps);

    nlohmann::json bundle;
    bundle["nmi"] = metrics::nmi(timeline.predicted, timeline.true_phase);
    bundle["autocorr_at_cycle"] = metrics::state_autocorrelation(timeline.predicted, cycle);
    bundle["cycle_prominence"] = metrics::cycle_prominence(timeline.predicted, cycle);
    const long max_lag =
        std::min<long>(300, static_cast<long>(timeline.predicted.size() / 4));
    bundle["best_lag"] = metrics::best_lag(timeline.predicted, timeline.true_phase, max_lag);
    const std::set<int> used(timeline.predicted.begin(), timeline.predicted.end());
    bundle["distinct_states"] = used.size();
    return bundle;
}

/// Metrics for one already-trained seed, merged with its training stats.
nlohmann::json evaluate_one(const RunConfig& cfg) {
    const RunPaths p = run_paths(cfg);
    require_artifact(p.dataset, "gen-data");
    require_artifact(p.checkpoint, "train");
    require_artifact(p.train_stats, "train");

    nlohmann::json bundle;
    switch (cfg.experiment) {
        case Experiment::Sindy: bundle = evaluate_sindy(cfg, p); break;
        case Experiment::Bvae: bundle = evaluate_bvae(cfg, p); break;
        case Experiment::Agents: bundle = evaluate_agents(cfg, p); break;
        case Experiment::AESindy: bundle = evaluate_aesindy(cfg, p); break;
        case Experiment::SomVae: bundle = evaluate_somvae(cfg, p); break;
    }
    const nlohmann::json stats = read_json_file(p.train_stats, "train");
    for (auto it = stats.begin(); it != stats.end(); ++it) bundle[it.key()] = it.value();
    check_finite(bundle);
    return bundle;
}

// --------------------------------------------------------------- plot data

void plot_scatter(const std::string& path, const std::vector<std::size_t>& ids,
                  const nn::Tensor& latents, const char* latent_prefix,
                  const nn::Tensor& concepts, const nn::Tensor* answers) {
    std::vector<std::string> header{"series_id"};
    for (std::size_t k = 0; k < latents.cols(); ++k)
        header.push_back(latent_prefix + std::to_string(k + 1));
    if (answers != nullptr)
        for (std::size_t a = 0; a < answers->cols(); ++a)
            header.push_back("a" + std::to_string(a + 1));
    for (const char* name : data::kConceptNames) header.emplace_back(name);

    const std::string tmp = path + ".tmp";
    io::CsvWriter w(tmp, header);
    std::vector<double> row;
    for (std::size_t i = 0; i < latents.rows(); ++i) {
        row.clear();
        row.push_back(static_cast<double>(ids[i]));
        for (std::size_t k = 0; k < latents.cols(); ++k) row.push_back(latents(i, k));
        if (answers != nullptr)
            for (std::size_t a = 0; a < answers->cols(); ++a) row.push_back((*answers)(i, a));
        for (std::size_t c = 0; c < concepts.cols(); ++c) row.push_back(concepts(i, c));
        w.write(row);
    }
    w.close();
    rename_into_place(tmp, path);
}

void plot_correlations(const std::string& path, const metrics::CorrelationReport& report) {
    const std::string tmp = path + ".tmp";
    io::CsvWriter w(tmp, {"concept", "latent", "r"});
    for (std::size_t c = 0; c < report.r.rows(); ++c)
        for (std::size_t k = 0; k < report.r.cols(); ++k) {
            std::string line = data::kConceptNames[c];
            line += ',';
            line += std::to_string(k + 1);
            line += ',';
            line += io::format_g17(report.r(c, k));
            w.write_raw(line);
        }
    w.close();
    rename_into_place(tmp, path);
}

void plot_trajectory_pair(const std::string& path, const nn::Tensor& truth,
                          const nn::Tensor& pred, double dt) {
    const std::string tmp = path + ".tmp";
    io::CsvWriter w(tmp,
                    {"t", "true_h1", "true_h2", "true_h3", "pred_h1", "pred_h2", "pred_h3"});
    for (std::size_t r = 0; r < truth.rows(); ++r)
        w.write({dt * static_cast<double>(r), truth(r, 0), truth(r, 1), truth(r, 2),
                 pred(r, 0), pred(r, 1), pred(r, 2)});
    w.close();
    rename_into_place(tmp, path);
}

void plot_timeline(const std::string& path, const somvae::StateTimeline& timeline) {
    const std::string tmp = path + ".tmp";
    io::CsvWriter w(tmp, {"t", "predicted_state", "true_phase"});
    for (std::size_t i = 0; i < timeline.predicted.size(); ++i)
        w.write({static_cast<double>(timeline.offset + i),
                 static_cast<double>(timeline.predicted[i]),
                 static_cast<double>(timeline.true_phase[i])});
    w.close();
    rename_into_place(tmp, path);
}

nlohmann::json report_sindy(const RunConfig& cfg, const RunPaths& p) {
    const data::SindySet set = data::load_sindy_set(p.dataset);
    const sindy::SindyModel model =
        sindy::sindy_from_json(read_json_file(p.checkpoint, "train"));
    const sim::SystemState x0 = held_out_ic(cfg.sindy_gen(), cfg.seed);
    const sim::Trajectory truth = sim::simulate(x0, set.params, set.dt, kResimSteps);
    const auto pred =
        sindy::simulate_identified(model, {x0.h1, x0.h2, x0.h3}, set.dt, kResimSteps);
    plot_trajectory_pair(p.plots_dir + "/resim.csv", trajectory_to_tensor(truth),
                         rows_to_tensor(pred), set.dt);
    return {{"equations", sindy::render_equations(model, {"h1", "h2", "h3"})},
            {"plots", {{"resim", "plots/resim.csv"}}}};
}

nlohmann::json report_bvae(const RunConfig& cfg, const RunPaths& p) {
    (void)cfg;
    const data::ConceptLabeledSet set = data::load_concept_set(p.dataset);
    bvae::BvaeModel model = bvae::bvae_from_checkpoint(read_json_file(p.checkpoint, "train"));
    const nn::Tensor feats = data::standardized_features(set.windows, set.scaler, set.eval_idx);
    const nn::Tensor concepts = data::select_rows(set.concepts, set.eval_idx);
    const nn::Tensor mu = bvae::encode_means(model, feats);
    plot_scatter(p.plots_dir + "/encode.csv", set.eval_idx, mu, "mu", concepts, nullptr);
    plot_correlations(p.plots_dir + "/correlation.csv",
                      metrics::correlation_matrix(mu, concepts));
    return {{"plots",
             {{"encode", "plots/encode.csv"}, {"correlation", "plots/correlation.csv"}}}};
}

nlohmann::json report_agents(const RunConfig& cfg, const RunPaths& p) {
    (void)cfg;
    const data::QASet set = data::load_qa_set(p.dataset);
    agents::AgentsModel model =
        agents::agents_from_checkpoint(read_json_file(p.checkpoint, "train"));
    const nn::Tensor feats =
        data::standardized_features(set.base.windows, set.base.scaler, set.base.eval_idx);
    const nn::Tensor concepts = data::select_rows(set.base.concepts, set.base.eval_idx);
    const nn::Tensor answers = data::select_rows(set.answers, set.base.eval_idx);
    const nn::Tensor z = agents::latent_responses(model, feats);
    plot_scatter(p.plots_dir + "/latents.csv", set.base.eval_idx, z, "z", concepts, &answers);
    plot_correlations(p.plots_dir + "/correlation.csv",
                      metrics::correlation_matrix(z, concepts));
    return {{"plots",
             {{"latents", "plots/latents.csv"}, {"correlation", "plots/correlation.csv"}}}};
}

nlohmann::json report_aesindy(const RunConfig& cfg, const RunPaths& p) {
    aesindy::AESindyModel model =
        aesindy::aesindy_from_checkpoint(read_json_file(p.checkpoint, "train"));
    data::SindyGenConfig gen = cfg.sindy_gen();
    gen.num_ic = 1;
    gen.steps = kHeldOutSteps;
    gen.seed = derive_seed(cfg.seed, kTagEvalIc);
    const data::SindySet raw = data::gen_sindy_set(gen);
    const data::LiftedSet lifted = data::lift_dataset(raw);
    nn::Tensor traj(lifted.x.rows(), data::kLiftDim);
    for (std::size_t r = 0; r < lifted.x.rows(); ++r)
        for (std::size_t c = 0; c < data::kLiftDim; ++c) traj(r, c) = lifted.x(r, c);
    const auto rt = aesindy::roundtrip_eval(model, traj, gen.dt);

    // de-lift through the linear monomial coordinates (columns 1..3)
    nn::Tensor truth(raw.x.rows(), 3);
    nn::Tensor pred(raw.x.rows(), 3);
    for (std::size_t r = 0; r < raw.x.rows(); ++r)
        for (std::size_t c = 0; c < 3; ++c) {
            truth(r, c) = raw.x(r, c);
            pred(r, c) = rt.predicted(r, 1 + c);
        }
    plot_trajectory_pair(p.plots_dir + "/roundtrip.csv", truth, pred, gen.dt);

    const sindy::SindyModel latent =
        sindy::sindy_from_json(read_json_file(p.dynamics, "train"));
    std::vector<std::string> names;
    for (std::size_t k = 0; k < model.config.latent_dim; ++k)
        names.push_back("z" + std::to_string(k + 1));
    return {{"equations", sindy::render_equations(latent, names)},
            {"plots", {{"roundtrip", "plots/roundtrip.csv"}}}};
}

nlohmann::json report_somvae(const RunConfig& cfg, const RunPaths& p) {
    (void)cfg;
    const data::StateSet set = data::load_state_set(p.dataset);
    somvae::SomVaeModel model =
        somvae::somvae_from_checkpoint(read_json_file(p.checkpoint, "train"));
    plot_timeline(p.plots_dir + "/timeline.csv", somvae::predict_states(model, set));
    return {{"plots", {{"timeline", "plots/timeline.csv"}}}};
}

}  // namespace

// ------------------------------------------------------------------ public

RunPaths run_paths(const RunConfig& cfg) {
    const char* env = std::getenv("TANKLAB_OUT");
    const std::string root = (env != nullptr && env[0] != '\0') ? env : cfg.output_dir;
    RunPaths p;
    p.run_dir = root + "/" + experiment_name(cfg.experiment) + "/seed" +
                std::to_string(cfg.seed);
    p.config_copy = p.run_dir + "/config.json";
    p.dataset = p.run_dir + "/dataset.csv";
    p.checkpoint = p.run_dir + "/checkpoint.json";
    p.dynamics = p.run_dir + "/dynamics.json";
    p.train_stats = p.run_dir + "/train_stats.json";
    p.history = p.run_dir + "/history.csv";
    p.metrics = p.run_dir + "/metrics.json";
    p.report = p.run_dir + "/report.json";
    p.plots_dir = p.run_dir + "/plots";
    p.trajectory = p.run_dir + "/trajectory.csv";
    return p;
}

void write_json_atomic(const std::string& path, const nlohmann::json& doc) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw IoError("cannot open for writing: " + tmp);
        out << doc.dump(2) << '\n';
        if (!out) throw IoError("write failed: " + tmp);
    }
    rename_into_place(tmp, path);
}

nlohmann::json read_json_file(const std::string& path, const std::string& produced_by) {
    std::ifstream in(path);
    if (!in) throw MissingInputError(path + " not found; run `" + produced_by + "` first");
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
}

void run_simulate(const RunConfig& cfg) {
    const RunPaths p = run_paths(cfg);
    write_provenance(cfg, p);
    const SimulateConfig sc = cfg.simulate_config();
    const sim::Trajectory traj = sim::simulate(sc.x0, sc.params, sc.dt, sc.steps);
    const std::string tmp = p.trajectory + ".tmp";
    sim::write_trajectory_csv(tmp, traj);
    rename_into_place(tmp, p.trajectory);
}

void run_gen_data(const RunConfig& cfg) {
    const RunPaths p = run_paths(cfg);
    write_provenance(cfg, p);
    const nlohmann::json provenance = cfg.to_json();
    switch (cfg.experiment) {
        case Experiment::Sindy:
            data::save_sindy_set(p.dataset, data::gen_sindy_set(cfg.sindy_gen()), provenance);
            break;
        case Experiment::AESindy:
            data::save_lifted_set(
                p.dataset, data::lift_dataset(data::gen_sindy_set(cfg.sindy_gen())), provenance);
            break;
        case Experiment::Bvae:
            data::save_concept_set(p.dataset, data::gen_concept_set(cfg.concept_gen()),
                                   provenance);
            break;
        case Experiment::Agents:
            data::save_qa_set(p.dataset, data::gen_qa_set(cfg.qa_gen()), provenance);
            break;
        case Experiment::SomVae:
            data::save_state_set(p.dataset, data::gen_state_set(cfg.state_gen()), provenance);
            break;
    }
}

void run_train(const RunConfig& cfg) {
    const RunPaths p = run_paths(cfg);
    write_provenance(cfg, p);
    require_artifact(p.dataset, "gen-data");
    nlohmann::json stats;
    switch (cfg.experiment) {
        case Experiment::Sindy: stats = train_sindy(cfg, p); break;
        case Experiment::Bvae: stats = train_bvae(cfg, p); break;
        case Experiment::Agents: stats = train_agents(cfg, p); break;
        case Experiment::AESindy: stats = train_aesindy(cfg, p); break;
        case Experiment::SomVae: stats = train_somvae(cfg, p); break;
    }
    write_json_atomic(p.train_stats, stats);
}

nlohmann::json run_evaluate(const RunConfig& cfg) {
    const RunPaths base = run_paths(cfg);
    write_provenance(cfg, base);

    nlohmann::json per_seed = nlohmann::json::array();
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < cfg.eval_seeds; ++i) {
        const std::uint64_t s = cfg.seed + i;
        seeds.push_back(s);
        nlohmann::json bundle = evaluate_one(cfg.with_seed(s));
        bundle["seed"] = s;
        per_seed.push_back(bundle);
    }

    nlohmann::json med;
    for (auto it = per_seed[0].begin(); it != per_seed[0].end(); ++it) {
        if (it.key() == "seed") continue;
        std::vector<double> values;
        for (const auto& b : per_seed) {
            if (!b.contains(it.key()))
                throw StateError("metric key '" + it.key() + "' missing for one seed");
            values.push_back(b.at(it.key()).get<double>());
        }
        med[it.key()] = metrics::median(values);
    }

    const nlohmann::json doc = {{"experiment", experiment_name(cfg.experiment)},
                                {"base_seed", cfg.seed},
                                {"seeds", seeds},
                                {"config", cfg.to_json()},
                                {"per_seed", per_seed},
                                {"median", med}};
    write_json_atomic(base.metrics, doc);
    return doc;
}

nlohmann::json run_report(const RunConfig& cfg) {
    const RunPaths p = run_paths(cfg);
    write_provenance(cfg, p);
    require_artifact(p.metrics, "evaluate");
    require_artifact(p.dataset, "gen-data");
    require_artifact(p.checkpoint, "train");
    ensure_dir(p.plots_dir);

    nlohmann::json body;
    switch (cfg.experiment) {
        case Experiment::Sindy: body = report_sindy(cfg, p); break;
        case Experiment::Bvae: body = report_bvae(cfg, p); break;
        case Experiment::Agents: body = report_agents(cfg, p); break;
        case Experiment::AESindy: body = report_aesindy(cfg, p); break;
        case Experiment::SomVae: body = report_somvae(cfg, p); break;
    }

    nlohmann::json doc = {{"experiment", experiment_name(cfg.experiment)},
                          {"seed", cfg.seed},
                          {"config", cfg.to_json()},
                          {"metrics", read_json_file(p.metrics, "evaluate")}};
    for (auto it = body.begin(); it != body.end(); ++it) doc[it.key()] = it.value();
    write_json_atomic(p.report, doc);
    return doc;
}

}  // namespace tanklab::cli
