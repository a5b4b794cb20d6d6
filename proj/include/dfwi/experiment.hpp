#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dfwi/acoustic.hpp"
#include "dfwi/datasets.hpp"
#include "dfwi/ddpm.hpp"
#include "dfwi/diffwi.hpp"
#include "dfwi/fwi.hpp"
#include "dfwi/metrics.hpp"
#include "dfwi/nn/denoiser.hpp"

namespace dfwi {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr const char* kOutputRootEnv = "DFWI_OUTPUT_ROOT";

/// User or configuration mistake (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical breakdown during a run (CLI exit code 3).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Condition { clean, noisy, few_shot, lowfreq };
enum class Method { fwi, diffwi_uncond, diffwi_cond };

std::string to_string(Condition c);
std::string to_string(Method m);
Condition condition_from_string(const std::string& s);
Method method_from_string(const std::string& s);
const std::vector<Condition>& all_conditions();
const std::vector<Method>& all_methods();

struct ExperimentConfig {
  struct Paths {
    std::string corpus;
    std::string checkpoint;
    std::string output;
  } paths;

  struct CorpusSection {
    int n_per_family = 250;
    std::uint64_t seed = 7;
    std::vector<std::string> families;  // empty = all eight
  } corpus;

  struct TrainSection {
    int epochs = 20;
    int batch = 8;
    double lr = 5e-4;
    std::uint64_t seed = 1;
    bool conditional = true;
    long max_steps = 0;
    nn::Architecture architecture;
    int T = 500;
    double beta_start = 1e-4;
    double beta_end = 0.02;
  } train;

  struct ModelSection {
    std::string family = "CurveVel-A";
    int index = 0;
    std::uint64_t seed = 2024;
    std::string file;  // external model instead of a held-out synthetic one
    double initial_sigma = 6.0;  // smoothing of the truth for the starting model, cells
  } model;

  struct AcquisitionSection {
    int n_sources = 32;
    int n_receivers = 64;
    std::vector<double> few_shot_positions{140.0, 420.0, 600.0};
    double f0 = 15.0;
    double dt = 1e-3;
    double t_record = 1.5;
  } acquisition;

  struct PerturbSection {
    double snr_db = 10.0;
    double highpass_hz = 3.0;
  } perturb;

  Condition condition = Condition::clean;
  Method method = Method::fwi;
  std::uint64_t seed = 0;  // noise realization and diffusion draws
  int jobs = 1;

  SolverConfig solver;
  FwiConfig fwi;
  DiffwiConfig diffwi;
  bool auto_t_start = false;  // data-driven rule against the corpus

  void validate() const;
};

/// Defaults, then the file (if any), then "a.b.c=value" overrides.
ExperimentConfig load_config(const std::string& file, const std::vector<std::string>& overrides);
std::string config_to_json(const ExperimentConfig& c);
ExperimentConfig config_from_json(const std::string& text);

/// Default output directory: explicit path, else $DFWI_OUTPUT_ROOT/<leaf>, else ./runs/<leaf>.
std::string resolve_output(const ExperimentConfig& c, const std::string& leaf);

// Runners shared by the command line and the acceptance suite.

Corpus run_gen_corpus(const ExperimentConfig& c, const std::string& out_dir);

struct TrainOutcome {
  TrainResult result;
  int steps_per_epoch = 0;
};
TrainOutcome run_train(const ExperimentConfig& c, const std::string& checkpoint_path,
                       const std::function<void(long, int, double)>& progress = {});

struct ProblemSetup {
  VelocityModel truth;
  DensityModel true_density;
  VelocityModel initial;
  AcquisitionGeometry geometry;
  std::vector<double> requested_shots;
  Wavelet wavelet;   // wavelet used for synthetics (high-passed under lowfreq)
  Gathers observed;  // after the condition's perturbation
};

/// Held-out truth, initial model, acquisition and perturbed observations.
ProblemSetup make_problem(const ExperimentConfig& c);

struct InversionOutcome {
  ProblemSetup problem;
  VelocityModel final_model;
  EvalReport report;
  DiffwiResult diagnostics;  // single row for plain FWI
  FwiStatus status = FwiStatus::completed;
};

/// Runs the configured method; writes artifacts when out_dir is non-empty.
InversionOutcome run_invert(const ExperimentConfig& c, const std::string& out_dir);
InversionOutcome run_invert(const ExperimentConfig& c, const ProblemSetup& problem, const std::string& out_dir);

struct ReportSummary {
  std::vector<EvalReport> aggregated;  // one row per (condition, method) present
  int runs = 0;
};

/// Aggregates every run below `runs_dir` (per model the median over seeds,
/// then the mean over models) and writes summary.csv, runs.csv and images.
ReportSummary run_report(const std::string& runs_dir, const std::string& out_dir);

/// 8-bit binary portable graymap, min-max scaled; constant fields map to 128.
/// A sidecar "<path>.txt" records the value range of the gray scale.
void write_pgm(const std::string& path, const Field2D& f, const std::string& units);

}  // namespace dfwi
