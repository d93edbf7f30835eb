#include "kvshield/attack.hpp"

#include <json.hpp>

namespace kvshield {

std::string ReconstructionReport::to_json() const {
  nlohmann::json j{{"engine_kind", engine_kind_name(engine_kind)},
                   {"d_model", d_model},
                   {"heads", num_heads},
                   {"seq_len", seq_len},
                   {"per_step_similarity", per_step_similarity},
                   {"mean", mean_similarity},
                   {"max_abs_diff", max_abs_diff},
                   {"verdict", verdict_name(verdict)},
                   {"threshold", threshold}};
  return j.dump();
}

ReconstructionReport reconstruction_report_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  ReconstructionReport r;
  r.engine_kind =
      j.at("engine_kind").get<std::string>() == "plain" ? EngineKind::plain : EngineKind::shielded;
  r.d_model = j.at("d_model").get<std::size_t>();
  r.num_heads = j.at("heads").get<std::size_t>();
  r.seq_len = j.at("seq_len").get<std::size_t>();
  r.per_step_similarity = j.at("per_step_similarity").get<std::vector<double>>();
  r.mean_similarity = j.at("mean").get<double>();
  r.max_abs_diff = j.at("max_abs_diff").get<double>();
  r.verdict = j.at("verdict").get<std::string>() == "reconstructed" ? Verdict::reconstructed
                                                                    : Verdict::protected_;
  r.threshold = j.at("threshold").get<double>();
  return r;
}

}  // namespace kvshield
