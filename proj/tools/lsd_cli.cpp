// Command-line front end: one subcommand per experiment plus a generic
// `sample` command for serialized models.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "lsd/experiments.hpp"

using namespace lsd;

namespace {

// Apply `--override key=value` entries onto the config JSON.  Keys use
// dots for nesting (train.total_iters=500); values are parsed as JSON when
// possible, else taken as strings.
void apply_override(nlohmann::json& j, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) throw ConfigError("override must be key=value: " + kv);
  std::string key = kv.substr(0, eq);
  const std::string raw = kv.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (...) {
    value = raw;
  }
  nlohmann::json* node = &j;
  std::size_t pos = 0;
  while (true) {
    const auto dot = key.find('.', pos);
    if (dot == std::string::npos) {
      (*node)[key.substr(pos)] = value;
      break;
    }
    node = &(*node)[key.substr(pos, dot - pos)];
    pos = dot + 1;
  }
}

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON config file");
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seeds, "seed list (replaces the config's)");
  cmd->add_option("--override", args.overrides, "config override key=value");
}

ExperimentConfig build_config(ExperimentKind kind, const CommonArgs& args) {
  nlohmann::json j;
  if (!args.config_path.empty()) {
    std::ifstream f(args.config_path);
    if (!f) throw ConfigError("cannot open config " + args.config_path);
    j = nlohmann::json::parse(f);
  } else {
    j = ExperimentConfig{};
  }
  j["kind"] = experiment_kind_name(kind);
  if (!args.out_dir.empty()) j["out_dir"] = args.out_dir;
  if (!args.seeds.empty()) j["seeds"] = args.seeds;
  for (const auto& kv : args.overrides) apply_override(j, kv);
  ExperimentConfig cfg;
  j.get_to(cfg);
  return cfg;
}

int run_kind(ExperimentKind kind, const CommonArgs& args) {
  ExperimentConfig cfg = build_config(kind, args);
  RunArtifacts run = run_experiment(cfg);
  for (const auto& f : run.files) std::cout << cfg.out_dir << "/" << f << "\n";
  return run.status;
}

int run_sample(const std::string& model_path, Eigen::Index n, std::uint64_t seed,
               const std::string& out_dir, const SgldConfig& sgld) {
  auto model = load_model(model_path);
  std::filesystem::create_directories(out_dir);
  Mat samples;
  nlohmann::json meta{{"model", model_path},
                      {"model_hash", detail::file_hash(model_path)},
                      {"seed", seed},
                      {"n", n}};
  if (auto* rbm = dynamic_cast<GbrbmModel*>(model.get())) {
    samples = gbrbm_gibbs(*rbm, n, 2000, 10, seed);
    meta["sampler"] = "gibbs";
    meta["burn_in"] = 2000;
    meta["thin"] = 10;
  } else if (auto* ica = dynamic_cast<IcaModel*>(model.get())) {
    samples = ica_sample(*ica, n, seed);
    meta["sampler"] = "laplace_inverse_cdf";
  } else if (auto* gauss = dynamic_cast<GaussianModel*>(model.get())) {
    Rng rng = make_rng(seed);
    samples = gaussian_matrix(rng, n, gauss->dim());
    samples = (samples.array().rowwise() * gauss->var.transpose().array().sqrt())
                  .rowwise() +
              gauss->mean.transpose().array();
    meta["sampler"] = "gaussian";
  } else if (auto* ebm = dynamic_cast<DeepEbmModel*>(model.get())) {
    SgldBatch batch = sgld_sample(*ebm, sgld, n, seed);
    samples = batch.samples;
    meta["sampler"] = "sgld";
    meta["step_size"] = sgld.step_size;
    meta["noise_scale"] = sgld.noise_scale;
    meta["steps"] = sgld.steps;
    meta["init"] = sgld_init_name(sgld.init);
  } else {
    throw ConfigError("sample: unsupported model type");
  }
  save_matrix(out_dir + "/samples.lsdx", samples);
  std::ofstream(out_dir + "/samples.json") << meta.dump(2) << "\n";
  std::cout << out_dir << "/samples.lsdx\n" << out_dir << "/samples.json\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned Stein discrepancy toolkit"};
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* help;
    ExperimentKind kind;
  };
  const Sub subs[] = {
      {"gauss-oracle", "trained critic vs the closed-form Gaussian oracle",
       ExperimentKind::gauss_oracle},
      {"rbm-gof", "RBM goodness-of-fit rejection rates over a perturbation grid",
       ExperimentKind::rbm_gof},
      {"rbm-eval", "LSD / KSD discrepancy curves over a perturbation grid",
       ExperimentKind::rbm_eval},
      {"ica-bench", "ICA training benchmark: LSD vs ML vs sliced SM",
       ExperimentKind::ica_bench},
      {"toy2d", "train a deep EBM on a 2-d toy dataset", ExperimentKind::toy2d_train},
      {"ebm-train", "train a deep EBM on IDX image data (smoke scale)",
       ExperimentKind::ebm_image_train},
      {"calibrate", "null-statistic calibration report", ExperimentKind::calibration},
  };

  std::map<std::string, std::pair<ExperimentKind, CommonArgs>> runs;
  for (const Sub& s : subs) {
    auto* cmd = app.add_subcommand(s.name, s.help);
    auto& slot = runs[s.name];
    slot.first = s.kind;
    add_common(cmd, slot.second);
  }

  auto* sample = app.add_subcommand("sample", "draw samples from a serialized model");
  std::string model_path, sample_out = "out";
  Eigen::Index sample_n = 100;
  std::uint64_t sample_seed = 0;
  SgldConfig sgld;
  sample->add_option("--model", model_path, "serialized model file")->required();
  sample->add_option("--n", sample_n, "number of samples");
  sample->add_option("--seed", sample_seed, "RNG seed");
  sample->add_option("--out", sample_out, "output directory");
  sample->add_option("--sgld-step-size", sgld.step_size, "SGLD gradient scale");
  sample->add_option("--sgld-noise", sgld.noise_scale, "SGLD noise sigma");
  sample->add_option("--sgld-steps", sgld.steps, "SGLD step count");

  CLI11_PARSE(app, argc, argv);

  try {
    for (const Sub& s : subs)
      if (app.got_subcommand(s.name))
        return run_kind(runs[s.name].first, runs[s.name].second);
    if (app.got_subcommand("sample"))
      return run_sample(model_path, sample_n, sample_seed, sample_out, sgld);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
