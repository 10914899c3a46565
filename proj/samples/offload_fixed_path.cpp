// Solves only the offloading and frequency subproblem on a straight path and
// prints the per-slot schedule.
#include <iostream>

#include "uavmec/offload_solver.hpp"
#include "uavmec/planner.hpp"

int main() {
  uavmec::Scenario s;
  s.user_pos = {uavmec::Vec2(0, 0), uavmec::Vec2(10, 10)};
  s.R = {2e6, 3e6};
  s.N = 6;
  s.P_u = 1e5;

  const uavmec::Trajectory path = uavmec::straight_line(s);
  const uavmec::OffloadSolution sol = uavmec::solve_p2(s, path);

  std::cout.precision(6);
  std::cout << "UAV computing energy " << sol.objective << " J\n";
  std::cout << "slot  l_1(Mbit)  l_2(Mbit)  f_1(GHz)  f_2(GHz)  f_uav(GHz)\n";
  for (int n = 0; n < s.N; ++n) {
    std::cout << n + 1 << "  " << sol.plan_part.l(0, n) * 1e-6 << "  " << sol.plan_part.l(1, n) * 1e-6 << "  "
              << sol.plan_part.f_user(0, n) * 1e-9 << "  " << sol.plan_part.f_user(1, n) * 1e-9 << "  "
              << sol.plan_part.f_uav(n) * 1e-9 << '\n';
  }
}
