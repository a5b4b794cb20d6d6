#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dfwi/nn/adam.hpp"
#include "dfwi/nn/denoiser.hpp"

namespace dfwi {

class DdpmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Forward-process tables, indexed by step t in [1, T] (stored at t - 1).
struct NoiseSchedule {
  int T = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;

  double b(int t) const { return beta.at(t - 1); }
  double a(int t) const { return alpha.at(t - 1); }
  double abar(int t) const { return alpha_bar.at(t - 1); }
  void check_step(int t) const;
  void validate() const;

  std::string to_json() const;
  static NoiseSchedule from_json(const std::string& text);
};

NoiseSchedule make_linear_schedule(int T = 500, double beta_start = 1e-4, double beta_end = 0.02);

using nn::Tensor;

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& s);

/// One ancestral step given the predicted noise. z may be null when t == 1.
Tensor p_sample(const Tensor& x_t, int t, const Tensor& eps_hat, const NoiseSchedule& s, const Tensor* z);

/// Noise predictor eps(x_t, t) for a batch sharing one step index.
using NoisePredictor = std::function<Tensor(const Tensor& x_t, int t)>;

/// Predictor backed by the network; cond is (B, 1, H, W), zeros for the
/// unconditional variant.
NoisePredictor network_predictor(nn::Denoiser& net, const Tensor& cond);

/// Deterministic standard-normal draws. Element e of a batch at step t gets
/// its own stream derived from (seed, stream, e, t), so results do not
/// depend on batch composition or scheduling.
enum class NoiseStream : std::uint64_t { reverse = 1, renoise = 2, training = 3, initial = 4 };
Tensor gaussian_like(const nn::Shape& shape, std::uint64_t seed, NoiseStream stream, int t);

/// Runs p_sample from step t_from down to t_to (exclusive), i.e. t_from - t_to steps.
Tensor reverse_chain(const NoisePredictor& eps, Tensor x, int t_from, int t_to, const NoiseSchedule& s,
                     std::uint64_t seed);

/// x_T ~ N(0, I), full chain to x_0, clamped to [-1, 1].
Tensor sample_full(nn::Denoiser& net, const Tensor& cond, const NoiseSchedule& s, std::uint64_t seed);

void clamp_unit(Tensor& x);

/// Paired normalized fields; cond entries are ignored for unconditional training.
struct TrainingSet {
  int size = 0;  // square crop edge
  std::vector<std::vector<nn::Real>> x0;
  std::vector<std::vector<nn::Real>> cond;
};

struct TrainOptions {
  int epochs = 20;
  int batch = 8;
  double lr = 5e-4;
  std::uint64_t seed = 0;
  bool conditional = true;
  /// Stop after this many optimizer steps (0 = run all epochs).
  long max_steps = 0;
  std::function<void(long step, int epoch, double loss)> progress;
};

struct TrainResult {
  std::vector<double> loss_trace;  // one entry per optimizer step
  long steps = 0;
  long skipped = 0;
};

TrainResult train_ddpm(nn::Denoiser& net, const TrainingSet& data, const NoiseSchedule& s, const TrainOptions& opts);

/// CSV: step,epoch,loss
void write_loss_csv(const std::string& path, const TrainResult& r, int steps_per_epoch);

}  // namespace dfwi
