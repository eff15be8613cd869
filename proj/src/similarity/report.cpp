#include "lineage/similarity/report.hpp"

#include <cstdio>

namespace lineage::similarity {
namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

nlohmann::json SimilarityReport::to_json() const {
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : rows) {
    rs.push_back({{"parent_id", r.parent_id},
                  {"metric", r.metric},
                  {"tap", r.tap},
                  {"alpha", r.alpha},
                  {"baseline", r.baseline},
                  {"approx", r.approx},
                  {"oracle", r.oracle ? nlohmann::json(*r.oracle) : nlohmann::json("n/a")},
                  {"probability", r.probability}});
  }
  return {{"child_id", child_id}, {"candidates", rs}};
}

std::string SimilarityReport::to_csv() const {
  std::string out = "child_id,parent_id,metric,tap,alpha,baseline,approx,oracle,probability\n";
  for (const auto& r : rows) {
    out += child_id + "," + r.parent_id + "," + r.metric + "," + r.tap + "," + num(r.alpha) + "," + num(r.baseline) +
           "," + num(r.approx) + "," + (r.oracle ? num(*r.oracle) : "n/a") + "," + num(r.probability) + "\n";
  }
  return out;
}

}  // namespace lineage::similarity
