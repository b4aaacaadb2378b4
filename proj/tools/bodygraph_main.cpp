// bodygraph: synthetic-body surface meshes to tissue-volume regression,
// end to end. Subcommands mirror the pipeline stages.

#include <cstdio>
#include <exception>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "bodygraph/pipeline.hpp"
#include "bodygraph/train.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitMissingPrereq = 3;
constexpr int kExitNumeric = 4;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "bodygraph: voxel bodies -> surface meshes -> decimation -> registration -> "
      "graph regression of VAT/ASAT volumes.\n"
      "Exit codes: 0 success, 2 config error, 3 missing/stale prerequisite, "
      "4 numeric failure."};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::string config_path;
  long long seed_override = -1;
  int jobs = 1;
  bool force = false;
  app.add_option("--config", config_path, "Path to the pipeline JSON config")->required();
  app.add_option("--seed", seed_override, "Override the config seed");
  app.add_option("--jobs", jobs, "Worker threads for per-subject stages")->check(CLI::PositiveNumber);
  app.add_flag("--force", force, "Run even if recorded input hashes mismatch");

  using Cmd = void (*)(const bodygraph::PipelineConfig&);
  const std::map<std::string, std::pair<Cmd, const char*>> commands = {
      {"synth", {bodygraph::cmd_synth, "Generate the synthetic cohort (volumes + silhouettes + manifest)"}},
      {"extract", {bodygraph::cmd_extract, "Extract full-resolution surface meshes"}},
      {"decimate", {bodygraph::cmd_decimate, "Decimate meshes to each configured face budget"}},
      {"register", {bodygraph::cmd_register, "Rigidly register meshes to the reference subject"}},
      {"train", {bodygraph::cmd_train, "Cross-validated training; writes metrics + checkpoints"}},
      {"eval", {bodygraph::cmd_eval, "Re-evaluate saved checkpoints on the test folds"}},
      {"sweep", {bodygraph::cmd_sweep, "Per-epoch timing across decimation levels (sequential)"}},
      {"stats", {bodygraph::cmd_stats, "Cohort label histograms per sex tag"}},
  };
  for (const auto& [name, cmd] : commands) app.add_subcommand(name, cmd.second);

  CLI11_PARSE(app, argc, argv);

  try {
    bodygraph::PipelineConfig cfg = bodygraph::load_config(config_path, seed_override);
    cfg.jobs = jobs;
    cfg.force = force;
    for (const auto& [name, cmd] : commands)
      if (app.got_subcommand(name)) {
        cmd.first(cfg);
        return 0;
      }
    std::fprintf(stderr, "no subcommand selected\n");
    return 1;
  } catch (const bodygraph::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const bodygraph::MissingPrerequisite& e) {
    std::fprintf(stderr, "missing prerequisite: %s\n", e.what());
    return kExitMissingPrereq;
  } catch (const bodygraph::StaleInputs& e) {
    std::fprintf(stderr, "stale inputs: %s\n", e.what());
    return kExitMissingPrereq;
  } catch (const bodygraph::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
