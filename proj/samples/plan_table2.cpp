// Plans the bundled four-user mission with every scheme and prints the UAV
// energy of each, followed by the proposed trajectory.
#include <iostream>
#include <string>

#include "uavmec/config.hpp"
#include "uavmec/planner.hpp"

int main(int argc, char** argv) {
  const std::string path = argc > 1 ? argv[1] : std::string(UAVMEC_SCENARIO_DIR) + "/table2.cfg";
  const uavmec::Scenario s = uavmec::load_scenario(path);

  for (uavmec::Scheme scheme :
       {uavmec::Scheme::proposed, uavmec::Scheme::straight_line, uavmec::Scheme::semi_circle}) {
    const uavmec::PlannerResult r = uavmec::run_scheme(s, scheme);
    std::cout.precision(12);
    std::cout << uavmec::to_string(scheme) << ": uav_total " << r.ledger.uav_total << " J, propulsion "
              << r.ledger.propulsion.sum() << " J, computing " << r.ledger.uav_compute.sum() << " J ("
              << uavmec::to_string(r.status) << ", " << r.iterations << " iterations)\n";
    if (scheme == uavmec::Scheme::proposed) uavmec::write_trajectory(std::cout, s, r.plan.traj);
  }
}
