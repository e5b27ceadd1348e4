#include "fedvg/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fedvg {

std::string format_float(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string rounds_csv(const std::vector<RoundRecord>& rounds) {
  std::string out = "round,val_loss,test_acc,n_sampled\n";
  for (const auto& r : rounds)
    out += std::to_string(r.round) + "," + format_float(r.val_loss) + "," +
           format_float(r.test_acc) + "," + std::to_string(r.sampled.size()) + "\n";
  return out;
}

std::string scores_csv(const std::vector<RoundRecord>& rounds) {
  std::string out = "round,client_id,mean_norm,score\n";
  for (const auto& r : rounds)
    for (size_t i = 0; i < r.sampled.size(); ++i)
      out += std::to_string(r.round) + "," + std::to_string(r.sampled[i]) + "," +
             format_float(r.mean_norms[i]) + "," + format_float(r.scores[i]) + "\n";
  return out;
}

std::string summary_json(const ExperimentResult& result) {
  nlohmann::ordered_json j;
  j["best_accuracy"] = result.best_acc;
  j["best_round"] = result.best_round;
  j["final_accuracy"] = result.final_acc;
  j["rounds"] = result.rounds.size();
  return j.dump(2) + "\n";
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << content;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace fedvg
