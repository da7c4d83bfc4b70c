#pragma once

#include <string>

#include <json.hpp>

#include "tanklab/runconfig.hpp"

namespace tanklab::cli {

/// Filesystem layout of one run: `<root>/<experiment>/seed<seed>/...` with
/// the root taken from $TANKLAB_OUT when set, else config.output_dir.
struct RunPaths {
    std::string run_dir;
    std::string config_copy;  // config.json, rewritten by every stage
    std::string dataset;      // dataset.csv (+ .manifest.json)
    std::string checkpoint;   // checkpoint.json
    std::string dynamics;     // dynamics.json (aesindy only)
    std::string train_stats;  // train_stats.json
    std::string history;      // history.csv
    std::string metrics;      // metrics.json
    std::string report;       // report.json
    std::string plots_dir;    // plots/
    std::string trajectory;   // trajectory.csv (simulate stage)
};

RunPaths run_paths(const RunConfig& cfg);

/// Write-temp-then-rename JSON emission (2-space indent, trailing newline).
void write_json_atomic(const std::string& path, const nlohmann::json& doc);
/// Loads a JSON artifact; MissingInputError names the producing stage when
/// the file does not exist.
nlohmann::json read_json_file(const std::string& path, const std::string& produced_by);

/// Pipeline stages. Every stage rewrites the provenance config copy, and
/// every emitted report embeds the full RunConfig.
void run_simulate(const RunConfig& cfg);
void run_gen_data(const RunConfig& cfg);
void run_train(const RunConfig& cfg);

/// Single- or multi-seed evaluation; with eval_seeds == k the runs at seeds
/// (seed, seed+1, ..., seed+k-1) must already be trained, and the bundle
/// carries per-seed values plus the per-key median. Returns the document
/// written to metrics.json (in the base seed's run directory).
nlohmann::json run_evaluate(const RunConfig& cfg);

/// Consolidated report.json plus the tidy plot-data CSVs; requires a prior
/// evaluate. Returns the report document.
nlohmann::json run_report(const RunConfig& cfg);

}  // namespace tanklab::cli
