#pragma once

#include <string>
#include <vector>

#include "dfwi/fields.hpp"

namespace dfwi {

/// Metrics on fields rescaled to [0, 1] through the shared corpus bounds.
double mae(const Field2D& a, const Field2D& b, ValueRange bounds);
double mse(const Field2D& a, const Field2D& b, ValueRange bounds);

inline constexpr int kSsimWindow = 7;

/// Mean local SSIM of two fields already in [0, 1] (uniform 7x7 windows,
/// C1 = 0.01^2, C2 = 0.03^2). Fields smaller than the window fall back to
/// global statistics and set *fallback.
double ssim(const Field2D& a, const Field2D& b, bool* fallback = nullptr);

/// SSIM after rescaling both fields with the shared bounds.
double ssim(const Field2D& a, const Field2D& b, ValueRange bounds);

struct EvalReport {
  std::string condition;
  std::string method;
  double mae = 0.0;
  double mse = 0.0;
  double ssim = 0.0;
};

EvalReport evaluate(const Field2D& truth, const Field2D& estimate, ValueRange bounds, const std::string& method,
                    const std::string& condition);

/// CSV: condition,method,mae,mse,ssim
std::string report_csv(const std::vector<EvalReport>& rows);
std::vector<EvalReport> parse_report_csv(const std::string& text);

}  // namespace dfwi
