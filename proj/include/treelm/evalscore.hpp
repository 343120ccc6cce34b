#ifndef TREELM_EVALSCORE_HPP
#define TREELM_EVALSCORE_HPP

#include <span>
#include <string>
#include <vector>

#include "treelm/transitions.hpp"

namespace treelm {

// Labeled bracketing scores in percent. F1 is defined as 0 when P + R = 0.
struct BracketScore {
  real precision = 0;
  real recall = 0;
  real f1 = 0;
  long matched = 0;
  long gold_total = 0;
  long pred_total = 0;
};

struct Bracket {
  std::string label;
  int start = 0;  // word span [start, end)
  int end = 0;
  auto operator<=>(const Bracket&) const = default;
};

// Multiset of labeled spans over the internal nodes (preterminals are already
// collapsed into leaves); the root span is included.
std::vector<Bracket> bracket_multiset(const Tree& t);

// Corpus-level precision/recall/F1 over aligned tree lists. Trees must pair up
// over identical word sequences.
BracketScore f1_score(std::span<const Tree> gold, std::span<const Tree> pred,
                      std::vector<BracketScore>* per_sentence = nullptr);

}  // namespace treelm

#endif  // TREELM_EVALSCORE_HPP
