#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "dfwi/experiment.hpp"
#include "dfwi/io.hpp"
#include "dfwi/nn/tensor.hpp"

namespace {

namespace fs = std::filesystem;

struct CommonFlags {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  int jobs = 0;
  long long seed = -1;
  std::string condition, method, corpus, checkpoint;
};

void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config, "JSON experiment config");
  sub->add_option("--set", f.sets, "override a config key, e.g. fwi.n_iters=30")->take_all();
  sub->add_option("--out", f.out, "output location");
  sub->add_option("--jobs", f.jobs, "worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--seed", f.seed, "run seed");
  sub->add_option("--corpus", f.corpus, "corpus directory");
  sub->add_option("--checkpoint", f.checkpoint, "checkpoint file");
}

dfwi::ExperimentConfig resolve(const CommonFlags& f, std::vector<std::string> extra) {
  std::vector<std::string> sets = f.sets;
  if (f.jobs > 0) sets.push_back("jobs=" + std::to_string(f.jobs));
  if (f.seed >= 0) sets.push_back("seed=" + std::to_string(f.seed));
  if (!f.condition.empty()) sets.push_back("condition=" + f.condition);
  if (!f.method.empty()) sets.push_back("method=" + f.method);
  if (!f.corpus.empty()) sets.push_back("paths.corpus=\"" + f.corpus + "\"");
  if (!f.checkpoint.empty()) sets.push_back("paths.checkpoint=\"" + f.checkpoint + "\"");
  sets.insert(sets.end(), extra.begin(), extra.end());
  return dfwi::load_config(f.config, sets);
}

std::string slug(const dfwi::ExperimentConfig& c) {
  return dfwi::to_string(c.condition) + "_" + dfwi::to_string(c.method) + "_s" + std::to_string(c.seed);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion-regularized full-waveform inversion experiments"};
  app.set_version_flag("--version", std::string(dfwi::kVersion));
  app.require_subcommand(1);
  CommonFlags f;

  auto* gen = app.add_subcommand("gen-corpus", "generate the synthetic velocity corpus");
  add_common(gen, f);
  int count = 0;
  gen->add_option("--count", count, "samples per family")->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train", "train the diffusion prior");
  add_common(train, f);
  bool unconditional = false;
  train->add_flag("--unconditional", unconditional, "train without the density condition");

  auto* inv = app.add_subcommand("invert", "run one inversion");
  add_common(inv, f);
  inv->add_option("--condition", f.condition, "clean | noisy | few_shot | lowfreq");
  inv->add_option("--method", f.method, "fwi | diffwi_uncond | diffwi_cond");

  auto* rep = app.add_subcommand("report", "aggregate completed runs");
  std::string runs_dir, rep_out;
  rep->add_option("runs", runs_dir, "directory holding run outputs")->required();
  rep->add_option("--out", rep_out, "report directory (default <runs>/report)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    dfwi::nn::retain_heap_memory();
    if (*gen) {
      std::vector<std::string> extra;
      if (count > 0) extra.push_back("corpus.n_per_family=" + std::to_string(count));
      auto c = resolve(f, extra);
      const std::string out = !f.out.empty() ? f.out : c.paths.corpus.empty() ? dfwi::resolve_output(c, "corpus")
                                                                                : c.paths.corpus;
      const auto corpus = dfwi::run_gen_corpus(c, out);
      dfwi::write_text((fs::path(out) / "config.json").string(), dfwi::config_to_json(c) + "\n");
      std::printf("wrote %zu samples to %s\n", corpus.entries.size(), out.c_str());
    } else if (*train) {
      std::vector<std::string> extra;
      if (unconditional) extra.push_back("train.conditional=false");
      auto c = resolve(f, extra);
      std::string ckpt = f.out.empty() ? c.paths.checkpoint : f.out;
      if (ckpt.empty()) {
        ckpt = (fs::path(dfwi::resolve_output(c, "checkpoints")) /
                (c.train.conditional ? "prior_cond.ckpt" : "prior_uncond.ckpt"))
                   .string();
      }
      const auto r = dfwi::run_train(c, ckpt, [](long step, int epoch, double loss) {
        if (step % 100 == 0) std::fprintf(stderr, "step %ld epoch %d loss %.5f\n", step, epoch, loss);
      });
      std::printf("trained %ld steps, final loss %.5f, checkpoint %s\n", r.result.steps,
                  r.result.loss_trace.empty() ? 0.0 : r.result.loss_trace.back(), ckpt.c_str());
    } else if (*inv) {
      auto c = resolve(f, {});
      const std::string out = !f.out.empty() ? f.out : dfwi::resolve_output(c, slug(c));
      const auto r = dfwi::run_invert(c, out);
      std::printf("%s %s: mae %.6f mse %.6f ssim %.6f (%s) -> %s\n", r.report.condition.c_str(),
                  r.report.method.c_str(), r.report.mae, r.report.mse, r.report.ssim,
                  dfwi::to_string(r.status).c_str(), out.c_str());
    } else if (*rep) {
      const std::string out = rep_out.empty() ? (fs::path(runs_dir) / "report").string() : rep_out;
      const auto s = dfwi::run_report(runs_dir, out);
      std::printf("aggregated %d runs into %zu rows -> %s\n", s.runs, s.aggregated.size(), out.c_str());
    }
  } catch (const dfwi::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const dfwi::NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const dfwi::SolverError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
