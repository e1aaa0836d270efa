#include "rsrect/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace rsrect {

RunConfig load_config(const std::string& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("config parse error in " + path + ": " + e.what());
  }
  RunConfig c = base;
  const double pi = 3.14159265358979323846;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "r") c.r = it->get<int>();
    else if (k == "seed") c.seed = it->get<uint64_t>();
    else if (k == "max_tx_px") c.ranges.max_tx_px = it->get<double>();
    else if (k == "max_rz_deg") c.ranges.max_rz_rad = it->get<double>() * pi / 180.0;
    else if (k == "lambda1") c.weights.l1 = it->get<double>();
    else if (k == "lambda2") c.weights.l2 = it->get<double>();
    else if (k == "lambda3") c.weights.l3 = it->get<double>();
    else if (k == "lambda4") c.weights.l4 = it->get<double>();
    else if (k == "lr") c.adam.lr = it->get<double>();
    else if (k == "beta1") c.adam.beta1 = it->get<double>();
    else if (k == "beta2") c.adam.beta2 = it->get<double>();
    else if (k == "eps") c.adam.eps = it->get<double>();
    else if (k == "dataset_dir") c.dataset_dir = it->get<std::string>();
    else if (k == "checkpoint") c.checkpoint = it->get<std::string>();
    else if (k == "out_dir") c.out_dir = it->get<std::string>();
    else if (k == "degree") c.degree = it->get<int>();
    else if (k == "threads") c.threads = it->get<int>();
    else if (k == "batch") c.batch = it->get<int>();
    else if (k == "epochs") c.epochs = it->get<int>();
    else if (k == "smooth_trajectory") c.smooth_trajectory = it->get<bool>();
    else throw std::runtime_error("config: unknown key \"" + k + "\" in " + path);
  }
  return c;
}

}  // namespace rsrect
