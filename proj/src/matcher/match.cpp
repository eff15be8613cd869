#include "lineage/matcher/match.hpp"

#include <cmath>

#include "lineage/errors.hpp"

namespace lineage::matcher {

MatchDistribution match(std::span<const double> scores, std::vector<std::string> parent_ids) {
  if (scores.empty()) throw ContractError("cannot match against an empty parent set");
  if (!parent_ids.empty() && parent_ids.size() != scores.size())
    throw ContractError("one parent id per score required");
  MatchDistribution d;
  d.scores.assign(scores.begin(), scores.end());
  d.parent_ids = std::move(parent_ids);
  double mx = scores[0];
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw NumericError("non-finite similarity score for candidate " + std::to_string(i));
    if (scores[i] > mx) {
      mx = scores[i];
      d.predicted = i;
    }
  }
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (i != d.predicted && scores[i] == mx) d.tied = true;
  d.probs.resize(scores.size());
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) z += (d.probs[i] = std::exp(scores[i] - mx));
  for (double& p : d.probs) p /= z;
  return d;
}

}  // namespace lineage::matcher
