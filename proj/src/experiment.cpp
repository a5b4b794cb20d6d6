#include "dfwi/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "dfwi/io.hpp"
#include "dfwi/nn/checkpoint.hpp"

namespace dfwi {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

template <class E>
E parse_enum(const std::string& s, const std::vector<E>& all, const char* what) {
  for (E e : all) {
    if (to_string(e) == s) return e;
  }
  throw ConfigError(std::string("unknown ") + what + " '" + s + "'");
}

std::string step_rule_name(StepRule r) { return r == StepRule::fixed_normalized ? "fixed_normalized" : "adam_like"; }
StepRule step_rule_from(const std::string& s) {
  if (s == "fixed_normalized") return StepRule::fixed_normalized;
  if (s == "adam_like") return StepRule::adam_like;
  throw ConfigError("unknown step_rule '" + s + "'");
}

json to_json_doc(const ExperimentConfig& c) {
  const auto& a = c.train.architecture;
  return json{
      {"paths", {{"corpus", c.paths.corpus}, {"checkpoint", c.paths.checkpoint}, {"output", c.paths.output}}},
      {"corpus", {{"n_per_family", c.corpus.n_per_family}, {"seed", c.corpus.seed}, {"families", c.corpus.families}}},
      {"train",
       {{"epochs", c.train.epochs},
        {"batch", c.train.batch},
        {"lr", c.train.lr},
        {"seed", c.train.seed},
        {"conditional", c.train.conditional},
        {"max_steps", c.train.max_steps},
        {"architecture",
         {{"image_size", a.image_size},
          {"in_channels", a.in_channels},
          {"base_channels", a.base_channels},
          {"channel_mults", a.channel_mults},
          {"time_embed_dim", a.time_embed_dim},
          {"groups", a.groups}}},
        {"schedule", {{"T", c.train.T}, {"beta_start", c.train.beta_start}, {"beta_end", c.train.beta_end}}}}},
      {"model",
       {{"family", c.model.family},
        {"index", c.model.index},
        {"seed", c.model.seed},
        {"file", c.model.file},
        {"initial_sigma", c.model.initial_sigma}}},
      {"acquisition",
       {{"n_sources", c.acquisition.n_sources},
        {"n_receivers", c.acquisition.n_receivers},
        {"few_shot_positions", c.acquisition.few_shot_positions},
        {"f0", c.acquisition.f0},
        {"dt", c.acquisition.dt},
        {"t_record", c.acquisition.t_record}}},
      {"perturb", {{"snr_db", c.perturb.snr_db}, {"highpass_hz", c.perturb.highpass_hz}}},
      {"condition", to_string(c.condition)},
      {"method", to_string(c.method)},
      {"seed", c.seed},
      {"jobs", c.jobs},
      {"solver",
       {{"boundary_width", c.solver.boundary_width},
        {"boundary_taper", c.solver.boundary_taper},
        {"spatial_order", c.solver.spatial_order},
        {"courant_safety", c.solver.courant_safety},
        {"injection", c.solver.injection == SourceInjection::nearest ? "nearest" : "bilinear"}}},
      {"fwi",
       {{"n_iters", c.fwi.n_iters},
        {"step_rule", step_rule_name(c.fwi.step_rule)},
        {"lr", c.fwi.lr},
        {"v_bounds", {c.fwi.v_bounds.lo, c.fwi.v_bounds.hi}},
        {"lambda", c.fwi.lambda},
        {"tikhonov_enabled", c.fwi.tikhonov_enabled},
        {"mask", c.fwi.gradient.mask},
        {"mask_top_rows", c.fwi.gradient.mask_top_rows},
        {"memory_budget_mb", c.fwi.gradient.memory_budget_bytes >> 20},
        {"checkpoint_every", c.fwi.gradient.checkpoint_every}}},
      {"diffwi",
       {{"t_start", c.diffwi.t_start},
        {"auto_t_start", c.auto_t_start},
        {"fwi_iters_per_step", c.diffwi.fwi_iters_per_step},
        {"stride", c.diffwi.stride},
        {"condition_source", to_string(c.diffwi.condition_source)},
        {"seed", c.diffwi.seed},
        {"allow_tiling", c.diffwi.allow_tiling},
        {"tile_overlap", c.diffwi.tile_overlap},
        {"allow_resample", c.diffwi.allow_resample},
        {"keep_snapshots", c.diffwi.keep_snapshots}}},
  };
}

// Every key in `user` must exist in `ref`; objects are checked recursively.
void check_keys(const json& user, const json& ref, const std::string& prefix) {
  if (!user.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!ref.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    if (ref.at(it.key()).is_object()) check_keys(it.value(), ref.at(it.key()), key);
  }
}

ExperimentConfig from_json_doc(const json& j) {
  ExperimentConfig c;
  check_keys(j, to_json_doc(c), "");
  json d = to_json_doc(c);
  d.merge_patch(j);
  try {
    c.paths.corpus = d["paths"]["corpus"].get<std::string>();
    c.paths.checkpoint = d["paths"]["checkpoint"].get<std::string>();
    c.paths.output = d["paths"]["output"].get<std::string>();
    c.corpus.n_per_family = d["corpus"]["n_per_family"].get<int>();
    c.corpus.seed = d["corpus"]["seed"].get<std::uint64_t>();
    c.corpus.families = d["corpus"]["families"].get<std::vector<std::string>>();
    const auto& t = d["train"];
    c.train.epochs = t["epochs"].get<int>();
    c.train.batch = t["batch"].get<int>();
    c.train.lr = t["lr"].get<double>();
    c.train.seed = t["seed"].get<std::uint64_t>();
    c.train.conditional = t["conditional"].get<bool>();
    c.train.max_steps = t["max_steps"].get<long>();
    c.train.architecture = nn::architecture_from_json(t["architecture"].dump());
    c.train.T = t["schedule"]["T"].get<int>();
    c.train.beta_start = t["schedule"]["beta_start"].get<double>();
    c.train.beta_end = t["schedule"]["beta_end"].get<double>();
    const auto& m = d["model"];
    c.model.family = m["family"].get<std::string>();
    c.model.index = m["index"].get<int>();
    c.model.seed = m["seed"].get<std::uint64_t>();
    c.model.file = m["file"].get<std::string>();
    c.model.initial_sigma = m["initial_sigma"].get<double>();
    const auto& a = d["acquisition"];
    c.acquisition.n_sources = a["n_sources"].get<int>();
    c.acquisition.n_receivers = a["n_receivers"].get<int>();
    c.acquisition.few_shot_positions = a["few_shot_positions"].get<std::vector<double>>();
    c.acquisition.f0 = a["f0"].get<double>();
    c.acquisition.dt = a["dt"].get<double>();
    c.acquisition.t_record = a["t_record"].get<double>();
    c.perturb.snr_db = d["perturb"]["snr_db"].get<double>();
    c.perturb.highpass_hz = d["perturb"]["highpass_hz"].get<double>();
    c.condition = condition_from_string(d["condition"].get<std::string>());
    c.method = method_from_string(d["method"].get<std::string>());
    c.seed = d["seed"].get<std::uint64_t>();
    c.jobs = d["jobs"].get<int>();
    const auto& s = d["solver"];
    c.solver.boundary_width = s["boundary_width"].get<int>();
    c.solver.boundary_taper = s["boundary_taper"].get<double>();
    c.solver.spatial_order = s["spatial_order"].get<int>();
    c.solver.courant_safety = s["courant_safety"].get<double>();
    const auto inj = s["injection"].get<std::string>();
    if (inj != "nearest" && inj != "bilinear") throw ConfigError("unknown solver.injection '" + inj + "'");
    c.solver.injection = inj == "nearest" ? SourceInjection::nearest : SourceInjection::bilinear;
    c.solver.jobs = c.jobs;
    const auto& f = d["fwi"];
    c.fwi.n_iters = f["n_iters"].get<int>();
    c.fwi.step_rule = step_rule_from(f["step_rule"].get<std::string>());
    c.fwi.lr = f["lr"].get<double>();
    c.fwi.v_bounds = {f["v_bounds"].at(0).get<double>(), f["v_bounds"].at(1).get<double>()};
    c.fwi.lambda = f["lambda"].get<double>();
    c.fwi.tikhonov_enabled = f["tikhonov_enabled"].get<bool>();
    c.fwi.gradient.mask = f["mask"].get<bool>();
    c.fwi.gradient.mask_top_rows = f["mask_top_rows"].get<int>();
    c.fwi.gradient.memory_budget_bytes = f["memory_budget_mb"].get<std::size_t>() << 20;
    c.fwi.gradient.checkpoint_every = f["checkpoint_every"].get<int>();
    const auto& g = d["diffwi"];
    c.diffwi.t_start = g["t_start"].get<int>();
    c.auto_t_start = g["auto_t_start"].get<bool>();
    c.diffwi.fwi_iters_per_step = g["fwi_iters_per_step"].get<int>();
    c.diffwi.stride = g["stride"].get<int>();
    c.diffwi.condition_source = condition_source_from_string(g["condition_source"].get<std::string>());
    c.diffwi.seed = g["seed"].get<std::uint64_t>();
    c.diffwi.allow_tiling = g["allow_tiling"].get<bool>();
    c.diffwi.tile_overlap = g["tile_overlap"].get<int>();
    c.diffwi.allow_resample = g["allow_resample"].get<bool>();
    c.diffwi.keep_snapshots = g["keep_snapshots"].get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config value has the wrong type: ") + e.what());
  } catch (const DdpmError& e) {
    throw ConfigError(e.what());
  } catch (const nn::NnError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // bare strings need no quotes
  }
  json* node = &doc;
  std::stringstream ks(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ks, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i])) (*node)[parts[i]] = json::object();
    node = &(*node)[parts[i]];
    if (!node->is_object()) throw ConfigError("override '" + key + "' descends into a non-object");
  }
  (*node)[parts.back()] = value;
}

VelocityBounds metric_bounds(const ExperimentConfig& c) { return c.fwi.v_bounds; }

struct PriorBundle {
  nn::Denoiser net;
  DiffusionPrior prior;
};

PriorBundle load_prior(const ExperimentConfig& c) {
  if (c.paths.checkpoint.empty()) throw ConfigError("method " + to_string(c.method) + " needs paths.checkpoint");
  if (!fs::exists(c.paths.checkpoint)) throw ConfigError("checkpoint not found: " + c.paths.checkpoint);
  auto loaded = nn::load_checkpoint(c.paths.checkpoint);
  const auto meta = json::parse(loaded.meta_json);
  PriorBundle b;
  b.net = std::move(loaded.net);
  try {
    b.prior.schedule = NoiseSchedule::from_json(meta.at("schedule").dump());
    b.prior.velocity_bounds = {meta.at("velocity_bounds").at(0).get<double>(),
                               meta.at("velocity_bounds").at(1).get<double>()};
    b.prior.conditional = meta.at("conditional").get<bool>();
    if (meta.at("bounds_checksum").get<std::string>() != bounds_checksum(b.prior.velocity_bounds)) {
      throw ConfigError("checkpoint bounds checksum mismatch: " + c.paths.checkpoint);
    }
  } catch (const json::exception& e) {
    throw ConfigError("checkpoint metadata incomplete (" + std::string(e.what()) + "): " + c.paths.checkpoint);
  }
  const bool want_cond = c.method == Method::diffwi_cond;
  if (b.prior.conditional != want_cond) {
    throw ConfigError("method " + to_string(c.method) + " needs a" + (want_cond ? " conditional" : "n unconditional") +
                      " checkpoint, got " + c.paths.checkpoint);
  }
  return b;
}

std::string fixed(double v, int digits = 6) {
  if (std::isnan(v)) return "nan";
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::string to_string(Condition c) {
  switch (c) {
    case Condition::clean: return "clean";
    case Condition::noisy: return "noisy";
    case Condition::few_shot: return "few_shot";
    case Condition::lowfreq: return "lowfreq";
  }
  return "?";
}

std::string to_string(Method m) {
  switch (m) {
    case Method::fwi: return "fwi";
    case Method::diffwi_uncond: return "diffwi_uncond";
    case Method::diffwi_cond: return "diffwi_cond";
  }
  return "?";
}

const std::vector<Condition>& all_conditions() {
  static const std::vector<Condition> v{Condition::clean, Condition::noisy, Condition::few_shot, Condition::lowfreq};
  return v;
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> v{Method::fwi, Method::diffwi_uncond, Method::diffwi_cond};
  return v;
}

Condition condition_from_string(const std::string& s) { return parse_enum(s, all_conditions(), "condition"); }
Method method_from_string(const std::string& s) { return parse_enum(s, all_methods(), "method"); }

void ExperimentConfig::validate() const {
  auto wrap = [](auto&& f) {
    try {
      f();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  };
  wrap([&] { solver.validate(); });
  wrap([&] { fwi.validate(); });
  wrap([&] { train.architecture.validate(); });
  wrap([&] { diffwi.validate(make_linear_schedule(train.T, train.beta_start, train.beta_end)); });
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  if (corpus.n_per_family < 1) throw ConfigError("corpus.n_per_family must be >= 1");
  if (train.epochs < 0 || train.batch < 1 || !(train.lr > 0.0)) throw ConfigError("invalid train section");
  if (!(acquisition.dt > 0.0) || !(acquisition.t_record > acquisition.dt) || !(acquisition.f0 > 0.0)) {
    throw ConfigError("invalid acquisition timing");
  }
  if (acquisition.n_sources < 1 || acquisition.n_receivers < 1) throw ConfigError("acquisition counts must be >= 1");
  if (condition == Condition::few_shot && acquisition.few_shot_positions.empty()) {
    throw ConfigError("few_shot condition needs acquisition.few_shot_positions");
  }
  if (!(model.initial_sigma >= 0.0)) throw ConfigError("model.initial_sigma must be >= 0");
  for (const auto& f : corpus.families) wrap([&] { family_spec(f); });
  if (model.file.empty()) wrap([&] { family_spec(model.family); });
}

std::string config_to_json(const ExperimentConfig& c) { return to_json_doc(c).dump(2); }

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  auto c = from_json_doc(j);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& file, const std::vector<std::string>& overrides) {
  json doc = json::object();
  if (!file.empty()) {
    if (!fs::exists(file)) throw ConfigError("config file not found: " + file);
    try {
      doc = json::parse(read_text(file));
    } catch (const json::exception& e) {
      throw ConfigError(file + ": " + e.what());
    }
  }
  for (const auto& o : overrides) apply_override(doc, o);
  auto c = from_json_doc(doc);
  c.validate();
  return c;
}

std::string resolve_output(const ExperimentConfig& c, const std::string& leaf) {
  if (!c.paths.output.empty()) return c.paths.output;
  const char* root = std::getenv(kOutputRootEnv);
  return (fs::path(root && *root ? root : "runs") / leaf).string();
}

Corpus run_gen_corpus(const ExperimentConfig& c, const std::string& out_dir) {
  std::vector<FamilySpec> specs;
  if (c.corpus.families.empty()) {
    specs = default_family_specs();
  } else {
    for (const auto& f : c.corpus.families) specs.push_back(family_spec(f));
  }
  Corpus corpus = build_corpus(specs, c.corpus.n_per_family, c.corpus.seed, kCorpusVelocityBounds);
  write_corpus(out_dir, corpus);
  return corpus;
}

TrainOutcome run_train(const ExperimentConfig& c, const std::string& checkpoint_path,
                       const std::function<void(long, int, double)>& progress) {
  if (c.paths.corpus.empty() || !fs::exists(fs::path(c.paths.corpus) / "manifest.json")) {
    throw ConfigError("corpus not found: '" + c.paths.corpus + "' (expected manifest.json)");
  }
  Corpus corpus;
  try {
    corpus = read_corpus(c.paths.corpus);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  const auto& arch = c.train.architecture;
  TrainingSet data;
  data.size = arch.image_size;
  for (const auto& e : corpus.entries) {
    if (e.velocity.grid.nx != arch.image_size || e.velocity.grid.nz != arch.image_size) {
      throw ConfigError("corpus sample " + e.family + "/" + std::to_string(e.index) + " is " +
                        std::to_string(e.velocity.grid.nz) + "x" + std::to_string(e.velocity.grid.nx) +
                        ", network expects " + std::to_string(arch.image_size));
    }
    const auto x = normalize(e.velocity, corpus.velocity_bounds.lo, corpus.velocity_bounds.hi);
    const auto r = to_signed_unit(e.density, corpus.density_bounds);
    data.x0.emplace_back(x.data.begin(), x.data.end());
    data.cond.emplace_back(r.data.begin(), r.data.end());
  }
  const NoiseSchedule s = make_linear_schedule(c.train.T, c.train.beta_start, c.train.beta_end);
  nn::Denoiser net(arch, c.train.seed);
  TrainOptions opts;
  opts.epochs = c.train.epochs;
  opts.batch = c.train.batch;
  opts.lr = c.train.lr;
  opts.seed = c.train.seed;
  opts.conditional = c.train.conditional;
  opts.max_steps = c.train.max_steps;
  opts.progress = progress;
  TrainOutcome out;
  try {
    out.result = train_ddpm(net, data, s, opts);
  } catch (const DdpmError& e) {
    throw NumericalError(e.what());
  }
  out.steps_per_epoch = (static_cast<int>(data.x0.size()) + opts.batch - 1) / opts.batch;

  json meta;
  meta["schedule"] = json::parse(s.to_json());
  meta["conditional"] = c.train.conditional;
  meta["velocity_bounds"] = {corpus.velocity_bounds.lo, corpus.velocity_bounds.hi};
  meta["density_bounds"] = {corpus.density_bounds.lo, corpus.density_bounds.hi};
  meta["bounds_checksum"] = bounds_checksum(corpus.velocity_bounds);
  meta["corpus_samples"] = corpus.entries.size();
  meta["steps"] = out.result.steps;
  meta["skipped_steps"] = out.result.skipped;
  meta["train"] = json::parse(config_to_json(c))["train"];
  meta["version"] = kVersion;
  const fs::path ckpt(checkpoint_path);
  if (ckpt.has_parent_path()) ensure_directory(ckpt.parent_path().string());
  nn::save_checkpoint(checkpoint_path, net, meta.dump());
  const fs::path stem = ckpt.parent_path() / ckpt.stem();
  write_loss_csv(stem.string() + "_loss.csv", out.result, out.steps_per_epoch);
  json manifest = {{"kind", "training"}, {"version", kVersion}, {"checkpoint", ckpt.filename().string()},
                   {"config", json::parse(config_to_json(c))}, {"steps", out.result.steps}};
  write_text(stem.string() + "_manifest.json", manifest.dump(2) + "\n");
  return out;
}

ProblemSetup make_problem(const ExperimentConfig& c) {
  ProblemSetup p;
  if (!c.model.file.empty()) {
    if (!fs::exists(c.model.file)) throw ConfigError("model file not found: " + c.model.file);
    try {
      p.truth = load_field_file(c.model.file);
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  } else {
    const FamilySpec spec = family_spec(c.model.family);
    p.truth = synth_model(spec, heldout_seed(c.model.seed, spec, c.model.index));
  }
  p.true_density = gardner_density(p.truth);
  p.initial = box_constrain(gaussian_smooth(p.truth, c.model.initial_sigma), c.fwi.v_bounds);

  try {
    p.geometry = surface_acquisition(p.truth.grid, c.acquisition.n_sources, c.acquisition.n_receivers);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (c.condition == Condition::few_shot) {
    try {
      auto sel = select_shots(p.geometry, p.truth.grid, c.acquisition.few_shot_positions);
      p.geometry = sel.geometry;
      p.requested_shots = sel.requested;
    } catch (const FieldError& e) {
      throw ConfigError(e.what());
    }
  }
  const int nt = static_cast<int>(std::lround(c.acquisition.t_record / c.acquisition.dt));
  p.wavelet = ricker(c.acquisition.f0, -1.0, c.acquisition.dt, nt);
  SolverConfig solver = c.solver;
  solver.jobs = c.jobs;
  p.observed = forward_model(p.truth, p.geometry, p.wavelet, solver);
  const std::uint64_t noise_seed = mix(mix(c.seed) ^ c.model.seed) ^ static_cast<std::uint64_t>(c.model.index);
  if (c.condition == Condition::noisy) p.observed = add_gaussian_noise(p.observed, c.perturb.snr_db, noise_seed);
  if (c.condition == Condition::lowfreq) {
    p.observed = highpass(p.observed, c.perturb.highpass_hz);
    p.wavelet.samples = highpass(p.wavelet.samples, p.wavelet.dt, c.perturb.highpass_hz);
  }
  return p;
}

InversionOutcome run_invert(const ExperimentConfig& c, const std::string& out_dir) {
  return run_invert(c, make_problem(c), out_dir);
}

InversionOutcome run_invert(const ExperimentConfig& c, const ProblemSetup& problem, const std::string& out_dir) {
  InversionOutcome out;
  out.problem = problem;
  SolverConfig solver = c.solver;
  solver.jobs = c.jobs;
  const VelocityBounds vb = metric_bounds(c);
  const ValueRange bounds{vb.lo, vb.hi};
  std::uint64_t diffusion_seed = 0;
  int t_start = c.diffwi.t_start;

  try {
    if (c.method == Method::fwi) {
      FwiResult r = fwi_iterate(problem.initial, problem.observed, problem.geometry, problem.wavelet, solver, c.fwi);
      out.final_model = r.model;
      out.status = r.status;
      out.diagnostics.model = r.model;
      out.diagnostics.misfit_trace = r.misfit_trace;
      const auto e = evaluate(problem.truth, r.model, bounds, "", "");
      out.diagnostics.diagnostics.push_back(
          {0, 0, r.misfit_trace.empty() ? std::nan("") : r.misfit_trace.back(), e.mae, e.mse, e.ssim});
    } else {
      PriorBundle b = load_prior(c);
      b.prior.net = &b.net;
      DiffwiConfig d = c.diffwi;
      diffusion_seed = mix(c.seed) + c.diffwi.seed;
      d.seed = diffusion_seed;
      if (c.auto_t_start) {
        if (c.paths.corpus.empty()) throw ConfigError("diffwi.auto_t_start needs paths.corpus");
        const Corpus corpus = read_corpus(c.paths.corpus);
        PriorReference ref;
        ref.velocity_bounds = b.prior.velocity_bounds;
        for (const auto& e : corpus.entries) {
          ref.members.push_back(normalize(e.velocity, ref.velocity_bounds.lo, ref.velocity_bounds.hi));
        }
        d.t_start = choose_t_start(problem.initial, &ref, b.prior.schedule);
      }
      t_start = d.t_start;
      out.diagnostics = diffusion_fwi(problem.initial, problem.observed, problem.geometry, problem.wavelet, solver,
                                      c.fwi, b.prior, d, &problem.truth, &problem.true_density);
      out.final_model = out.diagnostics.model;
      out.status = out.diagnostics.fwi_status;
    }
  } catch (const SolverError& e) {
    throw NumericalError(e.what());
  }
  out.report = evaluate(problem.truth, out.final_model, bounds, to_string(c.method), to_string(c.condition));

  if (out_dir.empty()) return out;
  ensure_directory(out_dir);
  const fs::path dir(out_dir);
  write_field((dir / "true_velocity.bin").string(), problem.truth, "velocity");
  write_field((dir / "initial_velocity.bin").string(), problem.initial, "velocity");
  write_field((dir / "final_velocity.bin").string(), out.final_model, "velocity");
  write_field((dir / "true_density.bin").string(), problem.true_density, "density");
  write_text((dir / "report.csv").string(), report_csv({out.report}));
  write_diagnostics_csv((dir / "diagnostics.csv").string(), out.diagnostics);
  {
    std::ostringstream os;
    os << "iteration,J\n";
    for (std::size_t i = 0; i < out.diagnostics.misfit_trace.size(); ++i) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%zu,%.9e\n", i, out.diagnostics.misfit_trace[i]);
      os << buf;
    }
    write_text((dir / "misfit.csv").string(), os.str());
  }
  {
    std::ostringstream os;
    os << "shot,requested_m,used_m\n";
    const auto& used = problem.geometry.source_positions;
    for (std::size_t i = 0; i < used.size(); ++i) {
      const double req = i < problem.requested_shots.size() ? problem.requested_shots[i] : used[i];
      os << i << ',' << fixed(req, 3) << ',' << fixed(used[i], 3) << '\n';
    }
    write_text((dir / "shots.csv").string(), os.str());
  }
  json manifest = {{"kind", "inversion"},
                   {"version", kVersion},
                   {"condition", to_string(c.condition)},
                   {"method", to_string(c.method)},
                   {"model_id", c.model.file.empty() ? c.model.family + "#" + std::to_string(c.model.index) + "@" +
                                                           std::to_string(c.model.seed)
                                                     : c.model.file},
                   {"seed", c.seed},
                   {"diffusion_seed", diffusion_seed},
                   {"t_start", c.method == Method::fwi ? 0 : t_start},
                   {"status", to_string(out.status)},
                   {"source_positions", problem.geometry.source_positions},
                   {"requested_shots", problem.requested_shots},
                   {"config", json::parse(config_to_json(c))}};
  write_text((dir / "manifest.json").string(), manifest.dump(2) + "\n");
  return out;
}

void write_pgm(const std::string& path, const Field2D& f, const std::string& units) {
  const double lo = f.min(), hi = f.max();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os << "P5\n" << f.grid.nx << ' ' << f.grid.nz << "\n255\n";
  for (double v : f.data) {
    const int g = hi > lo ? static_cast<int>(std::lround(255.0 * (v - lo) / (hi - lo))) : 128;
    os.put(static_cast<char>(static_cast<unsigned char>(std::clamp(g, 0, 255))));
  }
  std::ostringstream bar;
  bar << "gray 0 = " << fixed(lo, 3) << ' ' << units << "\n"
      << "gray 255 = " << fixed(hi, 3) << ' ' << units << "\n";
  if (!(hi > lo)) bar << "constant field: gray 128\n";
  write_text(path + ".txt", bar.str());
}

ReportSummary run_report(const std::string& runs_dir, const std::string& out_dir) {
  if (!fs::is_directory(runs_dir)) throw ConfigError("run directory not found: " + runs_dir);
  struct Run {
    std::string dir, condition, method, model;
    std::uint64_t seed;
    EvalReport r;
  };
  std::vector<Run> runs;
  for (const auto& entry : fs::recursive_directory_iterator(runs_dir)) {
    if (!entry.is_regular_file() || entry.path().filename() != "manifest.json") continue;
    const fs::path dir = entry.path().parent_path();
    if (!fs::exists(dir / "report.csv")) continue;
    json m;
    try {
      m = json::parse(read_text(entry.path().string()));
    } catch (const json::exception&) {
      continue;
    }
    if (m.value("kind", "") != "inversion") continue;
    const auto rows = parse_report_csv(read_text((dir / "report.csv").string()));
    if (rows.empty()) continue;
    runs.push_back({fs::relative(dir, runs_dir).generic_string(), m.at("condition").get<std::string>(),
                    m.at("method").get<std::string>(), m.at("model_id").get<std::string>(),
                    m.at("seed").get<std::uint64_t>(), rows.front()});
  }
  if (runs.empty()) throw ConfigError("no completed runs under " + runs_dir);
  std::sort(runs.begin(), runs.end(), [](const Run& a, const Run& b) { return a.dir < b.dir; });

  ReportSummary s;
  s.runs = static_cast<int>(runs.size());
  for (Condition cond : all_conditions()) {
    for (Method meth : all_methods()) {
      std::map<std::string, std::vector<const Run*>> by_model;
      for (const auto& r : runs) {
        if (r.condition == to_string(cond) && r.method == to_string(meth)) by_model[r.model].push_back(&r);
      }
      if (by_model.empty()) continue;
      EvalReport agg{to_string(cond), to_string(meth), 0.0, 0.0, 0.0};
      for (const auto& [model, list] : by_model) {
        std::vector<double> a, b, c;
        for (const Run* r : list) {
          a.push_back(r->r.mae);
          b.push_back(r->r.mse);
          c.push_back(r->r.ssim);
        }
        agg.mae += median(a);
        agg.mse += median(b);
        agg.ssim += median(c);
      }
      const double n = static_cast<double>(by_model.size());
      agg.mae /= n;
      agg.mse /= n;
      agg.ssim /= n;
      s.aggregated.push_back(agg);
    }
  }

  ensure_directory(out_dir);
  const fs::path out(out_dir);
  write_text((out / "summary.csv").string(), report_csv(s.aggregated));
  std::ostringstream rows;
  rows << "run,model,seed,condition,method,mae,mse,ssim\n";
  for (const auto& r : runs) {
    rows << r.dir << ',' << r.model << ',' << r.seed << ',' << r.condition << ',' << r.method << ',' << fixed(r.r.mae)
         << ',' << fixed(r.r.mse) << ',' << fixed(r.r.ssim) << '\n';
  }
  write_text((out / "runs.csv").string(), rows.str());
  const fs::path images = out / "images";
  ensure_directory(images.string());
  for (const auto& r : runs) {
    std::string tag = r.dir;
    std::replace(tag.begin(), tag.end(), '/', '_');
    for (const char* field : {"true_velocity", "initial_velocity", "final_velocity", "true_density"}) {
      const fs::path src = fs::path(runs_dir) / r.dir / (std::string(field) + ".bin");
      if (!fs::exists(src)) continue;
      const auto f = read_field(src.string());
      write_pgm((images / (tag + "_" + field + ".pgm")).string(), f.field,
                std::string(field) == "true_density" ? "kg/m^3" : "m/s");
    }
  }
  return s;
}

}  // namespace dfwi
