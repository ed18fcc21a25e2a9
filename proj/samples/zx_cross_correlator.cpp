// K_zx(t1, t1 + tau) for simultaneous sigma_z and sigma_x measurement without
// unitary evolution.
//
//   zx_cross_correlator [k_z]

#include <cstdio>
#include <cstdlib>

#include "cqm/gcr.hpp"

int main(int argc, char** argv) {
  const double k_z = argc > 1 ? std::atof(argv[1]) : 2.0;
  const auto r = cqm::cross_correlator_zx_demo(k_z);
  std::printf("t1_us,t2_us,K_zx\n");
  for (std::size_t i = 0; i < r.values.size(); ++i)
    std::printf("%.2f,%.2f,%.6f\n", r.times[i][0], r.times[i][1], r.values[i]);
}
