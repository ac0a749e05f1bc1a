#pragma once
// Subcommands of the `egohand` tool. Every command is driven by a fully
// resolved config struct; the same struct is written as config.json next to
// the outputs and can be fed back through `egohand replay`.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "egohand/events.hpp"
#include "egohand/lnes.hpp"
#include "egohand/metrics.hpp"
#include "egohand/simulator.hpp"
#include "egohand/stereo_solver.hpp"

namespace egohand::cli {

enum ExitCode { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3 };

struct RunContext {
  unsigned threads = 1;
  std::string isa = "auto";
  std::ostream* out = nullptr;  // progress and reports; may be null
};

struct SimulateConfig {
  std::string out;
  SceneConfig scene;
};

struct EncodeConfig {
  std::string events;
  std::optional<SensorSize> sensor;  // CSV input only
  Microseconds delta_t = kDefaultDeltaT;
  LnesMode mode = LnesMode::Sum;
  std::vector<Microseconds> t_end;  // resolved window ends
  Microseconds stride = 0;          // 0 = delta_t; used only when t_end is empty
  std::string out;
};

struct AnnotateConfig {
  std::string kp2d;
  std::string calib;
  std::string out;
  int window = kDefaultFillWindow;
  int max_gap = kDefaultMaxGap;
  std::vector<std::string> tags;
  std::optional<int> label;
};

enum class InitMode { Argmax, SoftArgmax };

struct SolveConfig {
  std::string calib;
  std::string annotation;  // exactly one of annotation / heatmaps
  std::string heatmaps;    // heatmap index file
  std::string gt;          // oracle predictor only
  std::string out;
  InitMode init = InitMode::Argmax;
  RefinementConfig refine;
};

struct EvalConfig {
  std::string pred;
  std::string gt;
  std::string out;
  bool rigid = false;
  int thresholds = kDefaultPckThresholds;
};

struct FeaturesConfig {
  std::vector<std::string> annotations;
  std::string out;
  bool classify = false;
};

struct RenderHeatmapsConfig {
  std::string annotation;
  std::string calib;
  std::string out;
  double downscale = 4.0;
  double sigma = 2.0;     // heatmap nodes
  double noise_px = 0.0;  // std of the peak displacement, sensor pixels
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const SimulateConfig& c);
nlohmann::json to_json(const EncodeConfig& c);
nlohmann::json to_json(const AnnotateConfig& c);
nlohmann::json to_json(const SolveConfig& c);
nlohmann::json to_json(const EvalConfig& c);
nlohmann::json to_json(const FeaturesConfig& c);
nlohmann::json to_json(const RenderHeatmapsConfig& c);

void run_simulate(const SimulateConfig& c, const RunContext& ctx);
void run_encode(EncodeConfig c, const RunContext& ctx);
void run_annotate(const AnnotateConfig& c, const RunContext& ctx);
void run_solve(const SolveConfig& c, const RunContext& ctx);
EvaluationReport run_eval(const EvalConfig& c, const RunContext& ctx);
void run_features(const FeaturesConfig& c, const RunContext& ctx);
void run_render_heatmaps(const RenderHeatmapsConfig& c, const RunContext& ctx);

/// Re-runs the command recorded in a config.json snapshot.
void run_replay(const std::string& config_path, const RunContext& ctx);

/// Full command-line entry point; returns the process exit code.
int main_entry(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace egohand::cli
