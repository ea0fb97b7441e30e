#include "bilevel_lb/report_io.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace bilevel_lb {

nlohmann::json to_json(const FunctionClassParams& fc) {
  return {{"L_f", fc.L_f},     {"L_g", fc.L_g},     {"mu", fc.mu},   {"Delta", fc.Delta},
          {"sigma", fc.sigma}, {"eps", fc.eps},     {"kappa", fc.kappa()}};
}

nlohmann::json to_json(const DerivedInstanceParams& p) {
  nlohmann::json sups = {{"psi", p.sups.psi},   {"psi1", p.sups.psi1}, {"psi2", p.sups.psi2},
                         {"phi", p.sups.phi},   {"phi1", p.sups.phi1}, {"phi2", p.sups.phi2}};
  return {{"mode", to_string(p.mode)},
          {"n", p.n},
          {"T", p.T},
          {"lambda", p.lambda},
          {"L", p.L_const},
          {"C_tilde", p.C_tilde},
          {"C_l", p.C_l},
          {"C_r", p.C_r},
          {"x0", p.x0},
          {"M_1n", p.M_1n},
          {"M_nn", p.M_nn},
          {"r_x", p.r_x},
          {"r_y", p.r_y},
          {"p", p.p},
          {"L_h", p.L_h},
          {"c0", p.c0},
          {"c1", p.c1},
          {"c2", p.c2},
          {"c3", p.c3},
          {"y_dim", p.y_dim()},
          {"chain_length", p.chain_length()},
          {"sups", sups},
          {"digest", params_digest(p)}};
}

nlohmann::json to_json(const ActivationEvent& e) {
  return {{"query_index", e.query_index},
          {"variable", to_string(e.variable)},
          {"flat_index", e.flat_index},
          {"trigger", to_string(e.trigger)}};
}

std::string activation_jsonl(const std::vector<ActivationEvent>& events, std::uint64_t seed) {
  std::string out;
  for (const auto& e : events) {
    nlohmann::json j = to_json(e);
    j["seed"] = seed;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + tmp + " for writing");
    os << content;
    os.flush();
    if (!os) throw std::runtime_error("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw std::runtime_error("cannot rename " + tmp + " to " + path);
  }
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

}  // namespace bilevel_lb
