#ifndef TREELM_TREEBANK_HPP
#define TREELM_TREEBANK_HPP

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "treelm/tensor.hpp"
#include "treelm/transitions.hpp"

namespace treelm {

// Dense, run-stable id spaces for words, nonterminals and POS tags. Word id 0
// is <unk>; POS id 0 is <unkpos>. Nonterminals and POS tags are never UNKed.
class Vocab {
 public:
  Vocab();

  int word_id(const std::string& w) const;  // 0 (<unk>) when missing
  int nt_id(const std::string& label) const;  // throws when missing
  std::optional<int> find_nt(const std::string& label) const;
  int pos_id(const std::string& tag) const;   // 0 (<unkpos>) when missing

  const std::string& word(int id) const { return words_[id]; }
  const std::string& nt(int id) const { return nts_[id]; }
  const std::string& pos(int id) const { return pos_[id]; }
  std::int64_t word_count(int id) const { return counts_[id]; }

  int num_words() const { return static_cast<int>(words_.size()); }
  int num_nts() const { return static_cast<int>(nts_.size()); }
  int num_pos() const { return static_cast<int>(pos_.size()); }
  int num_actions() const { return num_action_types(num_nts()); }

  int intern_word(const std::string& w, std::int64_t count);
  int intern_nt(const std::string& label);
  int intern_pos(const std::string& tag);

  void serialize(std::ostream& os) const;
  static Vocab deserialize(std::istream& is);

  bool operator==(const Vocab& other) const;

 private:
  std::vector<std::string> words_, nts_, pos_;
  std::vector<std::int64_t> counts_;
  std::unordered_map<std::string, int> word_ids_, nt_ids_, pos_ids_;
};

// One training/evaluation sentence. Word/POS ids are model ids (UNKed); the
// raw strings are kept for output fidelity.
struct Instance {
  std::vector<std::int32_t> words;
  std::vector<std::int32_t> pos;
  std::vector<std::string> raw_words;
  std::vector<std::string> raw_pos;
  std::optional<Tree> gold_tree;
  std::optional<std::vector<Action>> gold_disc;
  std::optional<std::vector<Action>> gold_gen;
};

struct TreebankReadResult {
  std::vector<Tree> trees;
  int skipped_empty = 0;
};

// Reads PTB-style bracketed trees (one per logical record, possibly spanning
// lines). Preterminals are collapsed into leaf POS annotations, function tags
// and -NONE- traces stripped, resulting empty constituents removed, unary
// X-over-X chains collapsed, and a labelless outer wrapper unwrapped.
TreebankReadResult read_treebank(const std::string& path);
TreebankReadResult read_treebank_stream(std::istream& is, const std::string& name);

// Reader for plain token files: one sentence per line (no gold trees).
std::vector<Instance> read_token_file(const std::string& path, const Vocab& vocab);

// Words with corpus frequency below min_count map to <unk>.
Vocab build_vocab(std::span<const Tree> trees, int min_count);

struct PretrainedTable {
  int dim = 0;
  Tensor vectors;  // [num_words x dim]; zero rows for out-of-table words
  std::vector<bool> present;
};

// Loads whitespace-separated `word v1 .. vD` lines restricted to in-vocab
// words; these vectors stay frozen during training.
PretrainedTable load_pretrained(const std::string& path, const Vocab& vocab);

Instance make_instance(const Tree& tree, const Vocab& vocab);
std::vector<Instance> make_instances(std::span<const Tree> trees, const Vocab& vocab);
Instance make_instance_from_tokens(std::span<const std::string> words,
                                   std::span<const std::string> pos, const Vocab& vocab);

// PTB-style tagged tokens `word/POS` with '/' inside words escaped as '\/'.
// A token without an unescaped slash is a bare word.
std::string tagged_token(const std::string& word, const std::string& pos);
std::pair<std::string, std::string> split_tagged_token(const std::string& token);

// Model-level conversions between token-level actions and id-level actions.
std::vector<Action> actions_from_tokens(std::span<const ActionToken> tokens, const Vocab& vocab);
std::vector<ActionToken> tokens_from_actions(std::span<const Action> actions, const Vocab& vocab,
                                             std::span<const std::string> surface_words);
std::vector<Action> oracle_actions(const Tree& tree, TransitionMode mode, const Vocab& vocab);

// Gold action sequences for the instance's tree in both modes.
void attach_gold_actions(Instance& inst, const Vocab& vocab);

}  // namespace treelm

#endif  // TREELM_TREEBANK_HPP
