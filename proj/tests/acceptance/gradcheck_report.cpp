// Prints "<layer> <relative error>" per layer type for the acceptance runner.
#include <cstdio>

#include "../common/gradcheck_suite.hpp"

int main() {
  for (const auto& r : gradcheck::run_all()) std::printf("%s %.3e\n", r.layer.c_str(), r.error);
  return 0;
}
