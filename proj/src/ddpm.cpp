#include "dfwi/ddpm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <random>
#include <sstream>

namespace dfwi {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return splitmix(splitmix(splitmix(splitmix(seed) ^ a) ^ b) ^ c);
}

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (!(a.shape == b.shape)) throw DdpmError(std::string(what) + ": shape " + a.shape.str() + " vs " + b.shape.str());
}

}  // namespace

void NoiseSchedule::check_step(int t) const {
  if (t < 1 || t > T) throw DdpmError("diffusion step " + std::to_string(t) + " outside [1, " + std::to_string(T) + "]");
}

void NoiseSchedule::validate() const {
  if (T < 1 || static_cast<int>(beta.size()) != T || alpha.size() != beta.size() || alpha_bar.size() != beta.size()) {
    throw DdpmError("schedule tables inconsistent with T");
  }
  for (int i = 0; i < T; ++i) {
    if (!(beta[i] > 0.0 && beta[i] < 1.0)) throw DdpmError("beta outside (0, 1)");
    if (!(alpha_bar[i] > 0.0) || (i > 0 && !(alpha_bar[i] < alpha_bar[i - 1]))) {
      throw DdpmError("alpha_bar must be positive and strictly decreasing");
    }
  }
}

std::string NoiseSchedule::to_json() const {
  nlohmann::json j;
  j["T"] = T;
  j["beta_start"] = beta_start;
  j["beta_end"] = beta_end;
  return j.dump();
}

NoiseSchedule NoiseSchedule::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  return make_linear_schedule(j.at("T").get<int>(), j.at("beta_start").get<double>(), j.at("beta_end").get<double>());
}

NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw DdpmError("schedule needs T >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw DdpmError("schedule needs 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.T = T;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  s.beta.resize(T);
  s.alpha.resize(T);
  s.alpha_bar.resize(T);
  double prod = 1.0;
  for (int i = 0; i < T; ++i) {
    s.beta[i] = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * i / (T - 1);
    s.alpha[i] = 1.0 - s.beta[i];
    prod *= s.alpha[i];
    s.alpha_bar[i] = prod;
  }
  s.validate();
  return s;
}

Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& s) {
  s.check_step(t);
  require_same(x0, eps, "q_sample");
  const double ab = s.abar(t);
  const auto ca = static_cast<nn::Real>(std::sqrt(ab));
  const auto cb = static_cast<nn::Real>(std::sqrt(1.0 - ab));
  Tensor out(x0.shape);
  for (std::size_t i = 0; i < x0.numel(); ++i) out.v[i] = ca * x0.v[i] + cb * eps.v[i];
  return out;
}

Tensor p_sample(const Tensor& x_t, int t, const Tensor& eps_hat, const NoiseSchedule& s, const Tensor* z) {
  s.check_step(t);
  require_same(x_t, eps_hat, "p_sample");
  const double inv_sqrt_a = 1.0 / std::sqrt(s.a(t));
  const double coef = s.b(t) / std::sqrt(1.0 - s.abar(t));
  const double sigma = t > 1 ? std::sqrt(s.b(t)) : 0.0;
  if (sigma > 0.0) {
    if (!z) throw DdpmError("p_sample at t > 1 needs a Gaussian draw");
    require_same(x_t, *z, "p_sample noise");
  }
  Tensor out(x_t.shape);
  for (std::size_t i = 0; i < x_t.numel(); ++i) {
    double v = inv_sqrt_a * (x_t.v[i] - coef * eps_hat.v[i]);
    if (sigma > 0.0) v += sigma * z->v[i];
    out.v[i] = static_cast<nn::Real>(v);
  }
  return out;
}

NoisePredictor network_predictor(nn::Denoiser& net, const Tensor& cond) {
  return [&net, cond](const Tensor& x_t, int t) {
    std::vector<int> steps(x_t.shape.n, t);
    return net.predict(x_t, cond, steps);
  };
}

Tensor gaussian_like(const nn::Shape& shape, std::uint64_t seed, NoiseStream stream, int t) {
  Tensor out(shape);
  const std::size_t per = out.numel() / static_cast<std::size_t>(shape.n);
  for (int e = 0; e < shape.n; ++e) {
    std::mt19937_64 rng(derive(seed, static_cast<std::uint64_t>(stream), static_cast<std::uint64_t>(e),
                               static_cast<std::uint64_t>(t)));
    std::normal_distribution<double> nd;
    for (std::size_t i = 0; i < per; ++i) out.v[e * per + i] = static_cast<nn::Real>(nd(rng));
  }
  return out;
}

Tensor reverse_chain(const NoisePredictor& eps, Tensor x, int t_from, int t_to, const NoiseSchedule& s,
                     std::uint64_t seed) {
  if (t_from < t_to || t_to < 0) throw DdpmError("reverse chain must run downward");
  if (t_from > t_to) s.check_step(t_from);
  nn::retain_heap_memory();
  for (int t = t_from; t > t_to; --t) {
    const Tensor e = eps(x, t);
    if (t > 1) {
      const Tensor z = gaussian_like(x.shape, seed, NoiseStream::reverse, t);
      x = p_sample(x, t, e, s, &z);
    } else {
      x = p_sample(x, t, e, s, nullptr);
    }
  }
  return x;
}

void clamp_unit(Tensor& x) {
  for (auto& v : x.v) v = std::clamp(v, nn::Real(-1), nn::Real(1));
}

Tensor sample_full(nn::Denoiser& net, const Tensor& cond, const NoiseSchedule& s, std::uint64_t seed) {
  Tensor x = gaussian_like(cond.shape, seed, NoiseStream::initial, s.T);
  x = reverse_chain(network_predictor(net, cond), std::move(x), s.T, 0, s, seed);
  clamp_unit(x);
  return x;
}

TrainResult train_ddpm(nn::Denoiser& net, const TrainingSet& data, const NoiseSchedule& s, const TrainOptions& opts) {
  s.validate();
  const int n = static_cast<int>(data.x0.size());
  if (n == 0) throw DdpmError("training set is empty");
  if (opts.batch < 1 || opts.epochs < 0) throw DdpmError("invalid batch or epoch count");
  const auto& arch = net.architecture();
  if (data.size != arch.image_size) {
    throw DdpmError("training crop " + std::to_string(data.size) + " does not match network size " +
                    std::to_string(arch.image_size));
  }
  const std::size_t plane = static_cast<std::size_t>(data.size) * data.size;
  for (int i = 0; i < n; ++i) {
    if (data.x0[i].size() != plane || (opts.conditional && data.cond.at(i).size() != plane)) {
      throw DdpmError("training sample " + std::to_string(i) + " has the wrong size");
    }
    for (auto v : data.x0[i]) {
      if (!(v >= -1 && v <= 1)) throw DdpmError("training sample " + std::to_string(i) + " outside [-1, 1]");
    }
  }
  nn::retain_heap_memory();

  nn::AdamConfig acfg;
  acfg.lr = opts.lr;
  nn::AdamState astate;
  TrainResult r;
  std::mt19937_64 rng(derive(opts.seed, static_cast<std::uint64_t>(NoiseStream::training), 0, 0));
  std::uniform_int_distribution<int> pick_t(1, s.T);
  std::normal_distribution<double> nd;
  std::vector<int> order(n);
  nn::DenoiserPass pass(net);

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start < n; start += opts.batch) {
      if (opts.max_steps > 0 && r.steps >= opts.max_steps) return r;
      const int b = std::min(opts.batch, n - start);
      const nn::Shape shape{b, 1, data.size, data.size};
      Tensor x0(shape), cond(shape), eps(shape), xt(shape);
      std::vector<int> steps(b);
      for (int k = 0; k < b; ++k) {
        const int idx = order[start + k];
        std::copy(data.x0[idx].begin(), data.x0[idx].end(), x0.v.begin() + k * plane);
        if (opts.conditional) std::copy(data.cond[idx].begin(), data.cond[idx].end(), cond.v.begin() + k * plane);
        steps[k] = pick_t(rng);
        const double ab = s.abar(steps[k]);
        const double ca = std::sqrt(ab), cb = std::sqrt(1.0 - ab);
        for (std::size_t i = 0; i < plane; ++i) {
          const std::size_t j = k * plane + i;
          eps.v[j] = static_cast<nn::Real>(nd(rng));
          xt.v[j] = static_cast<nn::Real>(ca * x0.v[j] + cb * eps.v[j]);
        }
      }
      const Tensor& pred = pass.forward(xt, cond, steps);
      double loss = 0.0;
      Tensor up(pred.shape);
      const double scale = 2.0 / static_cast<double>(pred.numel());
      for (std::size_t i = 0; i < pred.numel(); ++i) {
        const double d = static_cast<double>(pred.v[i]) - eps.v[i];
        loss += d * d;
        up.v[i] = static_cast<nn::Real>(scale * d);
      }
      loss /= static_cast<double>(pred.numel());
      if (!std::isfinite(loss)) {
        throw DdpmError("non-finite training loss at step " + std::to_string(r.steps) + " (epoch " +
                        std::to_string(epoch) + ")");
      }
      net.params().zero_grad();
      pass.backward(up);
      if (!nn::adam_step(net.params(), astate, acfg)) ++r.skipped;
      r.loss_trace.push_back(loss);
      ++r.steps;
      if (opts.progress) opts.progress(r.steps, epoch, loss);
    }
  }
  return r;
}

void write_loss_csv(const std::string& path, const TrainResult& r, int steps_per_epoch) {
  std::ofstream os(path);
  if (!os) throw DdpmError("cannot write " + path);
  os << "step,epoch,loss\n";
  os.precision(9);
  for (std::size_t i = 0; i < r.loss_trace.size(); ++i) {
    os << i + 1 << ',' << (steps_per_epoch > 0 ? static_cast<long>(i) / steps_per_epoch : 0) << ','
       << r.loss_trace[i] << '\n';
  }
}

}  // namespace dfwi
