#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace lineage::similarity {

struct SimilarityRow {
  std::string parent_id;
  std::string metric;
  std::string tap;
  double alpha = 0.0;
  double baseline = 0.0;
  double approx = 0.0;
  std::optional<double> oracle;  // absent when over the Jacobian budget
  double probability = 0.0;      // matching probability of this candidate
};

// One child scored against its candidate parents.
struct SimilarityReport {
  std::string child_id;
  std::vector<SimilarityRow> rows;

  nlohmann::json to_json() const;
  // Header: child_id,parent_id,metric,tap,alpha,baseline,approx,oracle,probability
  std::string to_csv() const;
};

}  // namespace lineage::similarity
