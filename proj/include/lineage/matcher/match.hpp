#pragma once

#include <span>
#include <string>
#include <vector>

namespace lineage::matcher {

struct MatchDistribution {
  std::vector<std::string> parent_ids;
  std::vector<double> scores;
  std::vector<double> probs;  // softmax of scores
  std::size_t predicted = 0;  // argmax, lowest index on ties
  bool tied = false;          // another candidate shares the maximum score
};

MatchDistribution match(std::span<const double> scores, std::vector<std::string> parent_ids = {});

}  // namespace lineage::matcher
