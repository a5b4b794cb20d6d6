#include "dfwi/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace dfwi {

namespace {

void require_same_grid(const Field2D& a, const Field2D& b) {
  if (a.grid.nx != b.grid.nx || a.grid.nz != b.grid.nz || a.data.size() != b.data.size()) {
    throw FieldError("metric operands differ in shape: " + std::to_string(a.grid.nz) + "x" + std::to_string(a.grid.nx) +
                     " vs " + std::to_string(b.grid.nz) + "x" + std::to_string(b.grid.nx));
  }
}

double unit(double v, ValueRange r) { return (v - r.lo) / (r.hi - r.lo); }

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

double ssim_from_moments(double ma, double mb, double va, double vb, double cov) {
  return ((2.0 * ma * mb + kC1) * (2.0 * cov + kC2)) / ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

double mae(const Field2D& a, const Field2D& b, ValueRange r) {
  require_same_grid(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += std::abs(unit(a.data[i], r) - unit(b.data[i], r));
  return s / static_cast<double>(a.data.size());
}

double mse(const Field2D& a, const Field2D& b, ValueRange r) {
  require_same_grid(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = unit(a.data[i], r) - unit(b.data[i], r);
    s += d * d;
  }
  return s / static_cast<double>(a.data.size());
}

double ssim(const Field2D& a, const Field2D& b, bool* fallback) {
  require_same_grid(a, b);
  const int nx = a.grid.nx, nz = a.grid.nz, w = kSsimWindow;
  if (nx < w || nz < w) {
    if (fallback) *fallback = true;
    const double n = static_cast<double>(a.data.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
      ma += a.data[i];
      mb += b.data[i];
    }
    ma /= n;
    mb /= n;
    double va = 0, vb = 0, cov = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
      va += (a.data[i] - ma) * (a.data[i] - ma);
      vb += (b.data[i] - mb) * (b.data[i] - mb);
      cov += (a.data[i] - ma) * (b.data[i] - mb);
    }
    return ssim_from_moments(ma, mb, va / n, vb / n, cov / n);
  }
  if (fallback) *fallback = false;

  // summed-area tables of a, b, a^2, b^2, ab
  const int sx = nx + 1;
  std::vector<double> Sa((nz + 1) * sx), Sb(Sa.size()), Saa(Sa.size()), Sbb(Sa.size()), Sab(Sa.size());
  for (int iz = 0; iz < nz; ++iz) {
    for (int ix = 0; ix < nx; ++ix) {
      const double x = a.at(iz, ix), y = b.at(iz, ix);
      const int k = (iz + 1) * sx + ix + 1, up = iz * sx + ix + 1, left = (iz + 1) * sx + ix, diag = iz * sx + ix;
      Sa[k] = x + Sa[up] + Sa[left] - Sa[diag];
      Sb[k] = y + Sb[up] + Sb[left] - Sb[diag];
      Saa[k] = x * x + Saa[up] + Saa[left] - Saa[diag];
      Sbb[k] = y * y + Sbb[up] + Sbb[left] - Sbb[diag];
      Sab[k] = x * y + Sab[up] + Sab[left] - Sab[diag];
    }
  }
  auto box = [&](const std::vector<double>& S, int z0, int x0) {
    return S[(z0 + w) * sx + x0 + w] - S[z0 * sx + x0 + w] - S[(z0 + w) * sx + x0] + S[z0 * sx + x0];
  };
  const double n = w * w;
  double total = 0.0;
  int count = 0;
  for (int z0 = 0; z0 + w <= nz; ++z0) {
    for (int x0 = 0; x0 + w <= nx; ++x0) {
      const double ma = box(Sa, z0, x0) / n, mb = box(Sb, z0, x0) / n;
      // unbiased window (co)variances
      const double va = (box(Saa, z0, x0) - n * ma * ma) / (n - 1);
      const double vb = (box(Sbb, z0, x0) - n * mb * mb) / (n - 1);
      const double cov = (box(Sab, z0, x0) - n * ma * mb) / (n - 1);
      total += ssim_from_moments(ma, mb, va, vb, cov);
      ++count;
    }
  }
  return total / count;
}

double ssim(const Field2D& a, const Field2D& b, ValueRange r) {
  return ssim(to_unit_interval(a, r), to_unit_interval(b, r));
}

EvalReport evaluate(const Field2D& truth, const Field2D& estimate, ValueRange bounds, const std::string& method,
                    const std::string& condition) {
  EvalReport e;
  e.condition = condition;
  e.method = method;
  e.mae = mae(truth, estimate, bounds);
  e.mse = mse(truth, estimate, bounds);
  e.ssim = ssim(truth, estimate, bounds);
  return e;
}

std::string report_csv(const std::vector<EvalReport>& rows) {
  std::string out = "condition,method,mae,mse,ssim\n";
  for (const auto& r : rows) out += r.condition + "," + r.method + "," + fmt(r.mae) + "," + fmt(r.mse) + "," + fmt(r.ssim) + "\n";
  return out;
}

std::vector<EvalReport> parse_report_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);
  if (line.rfind("condition,method,mae,mse,ssim", 0) != 0) throw FieldError("not a report CSV (header: " + line + ")");
  std::vector<EvalReport> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    EvalReport r;
    std::string f;
    std::getline(ls, r.condition, ',');
    std::getline(ls, r.method, ',');
    std::getline(ls, f, ',');
    r.mae = std::stod(f);
    std::getline(ls, f, ',');
    r.mse = std::stod(f);
    std::getline(ls, f, ',');
    r.ssim = std::stod(f);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace dfwi
