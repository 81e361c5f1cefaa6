#pragma once

#include <string>
#include <vector>

#include "dopf/feeder.hpp"
#include "dopf/scenario.hpp"

namespace testdata {

inline std::string path(const std::string& name) { return std::string(DOPF_DATA_DIR) + "/feeders/" + name; }
inline std::string test_path(const std::string& name) { return std::string(DOPF_TEST_DIR) + "/fixtures/" + name; }

inline dopf::FeederGraph load(const std::string& name) { return dopf::load_feeder(path(name)); }

inline const std::vector<std::string>& bundled() {
  static const std::vector<std::string> names = {"4bus.feeder", "4bus_dg.feeder", "balanced3.feeder", "ieee13.feeder",
                                                 "ieee13_dg.feeder"};
  return names;
}

}  // namespace testdata
