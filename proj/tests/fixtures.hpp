#pragma once

#include "infoctrl/model_io.hpp"
#include "oracles.hpp"

#include <string>

namespace fixtures {

inline std::string data_path(const std::string& name) { return std::string(INFOCTRL_DATA_DIR) + "/" + name; }

inline infoctrl::io::ModelDocument load(const std::string& name) { return infoctrl::io::load_model(data_path(name)); }

inline infoctrl::MdpModel load_mdp(const std::string& name) { return std::get<infoctrl::MdpModel>(load(name).model); }

inline oracle::Model to_oracle(const infoctrl::MdpModel& m) { return oracle::Model{m.transitions(), m.cost()}; }

}  // namespace fixtures
