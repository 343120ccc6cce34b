#include "treelm/evalscore.hpp"

#include <algorithm>
#include <map>

namespace treelm {

namespace {

int collect_brackets(const Tree& t, int start, std::vector<Bracket>& out) {
  if (t.leaf) return start + 1;
  int end = start;
  for (const Tree& c : t.children) end = collect_brackets(c, end, out);
  out.push_back({t.label, start, end});
  return end;
}

BracketScore score_counts(long matched, long gold_total, long pred_total) {
  BracketScore s;
  s.matched = matched;
  s.gold_total = gold_total;
  s.pred_total = pred_total;
  real p = pred_total > 0 ? 100.0 * matched / pred_total : 0;
  real r = gold_total > 0 ? 100.0 * matched / gold_total : 0;
  s.precision = p;
  s.recall = r;
  s.f1 = (p + r) > 0 ? 2 * p * r / (p + r) : 0;
  return s;
}

long match_count(const std::vector<Bracket>& gold, const std::vector<Bracket>& pred) {
  std::map<Bracket, long> bag;
  for (const Bracket& b : gold) ++bag[b];
  long matched = 0;
  for (const Bracket& b : pred) {
    auto it = bag.find(b);
    if (it != bag.end() && it->second > 0) {
      --it->second;
      ++matched;
    }
  }
  return matched;
}

}  // namespace

std::vector<Bracket> bracket_multiset(const Tree& t) {
  std::vector<Bracket> out;
  collect_brackets(t, 0, out);
  return out;
}

BracketScore f1_score(std::span<const Tree> gold, std::span<const Tree> pred,
                      std::vector<BracketScore>* per_sentence) {
  if (gold.size() != pred.size())
    fail(ErrorCode::Invalid, "gold and predicted tree lists have different lengths (" +
                                 std::to_string(gold.size()) + " vs " +
                                 std::to_string(pred.size()) + ")");
  if (gold.empty()) fail(ErrorCode::Invalid, "f1 over empty tree lists");
  long matched = 0, gold_total = 0, pred_total = 0;
  if (per_sentence) per_sentence->clear();
  for (size_t i = 0; i < gold.size(); ++i) {
    if (tree_words(gold[i]) != tree_words(pred[i]))
      fail(ErrorCode::Invalid,
           "word sequences differ at sentence " + std::to_string(i));
    auto gb = bracket_multiset(gold[i]);
    auto pb = bracket_multiset(pred[i]);
    long m = match_count(gb, pb);
    matched += m;
    gold_total += static_cast<long>(gb.size());
    pred_total += static_cast<long>(pb.size());
    if (per_sentence)
      per_sentence->push_back(score_counts(m, static_cast<long>(gb.size()),
                                           static_cast<long>(pb.size())));
  }
  return score_counts(matched, gold_total, pred_total);
}

}  // namespace treelm
