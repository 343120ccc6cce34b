#ifndef TREELM_TRANSITIONS_HPP
#define TREELM_TRANSITIONS_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "treelm/common.hpp"

namespace treelm {

// Labeled constituency tree. Internal nodes carry a label and at least one
// child; leaves carry the word and an optional POS tag.
struct Tree {
  bool leaf = false;
  std::string label;
  std::string word;
  std::string pos;
  std::vector<Tree> children;

  static Tree make_leaf(std::string word, std::string pos = "");
  static Tree make_internal(std::string label, std::vector<Tree> children);
  bool operator==(const Tree&) const = default;
};

std::vector<std::string> tree_words(const Tree& t);
std::vector<std::string> tree_pos_tags(const Tree& t);
std::string tree_to_string(const Tree& t);  // bracketed; leaves print as (POS word)

enum class TransitionMode { Discriminative, Generative };

enum class ActionKind : std::uint8_t { Nt, Shift, Gen, Reduce };

// Model-level action over vocabulary ids. The scored action inventory has
// |X| + 2 entries: SHIFT and GEN share index 0 (the terminal action, with the
// word argument scored separately), REDUCE is 1, NT(X) is 2 + X.
struct Action {
  ActionKind kind = ActionKind::Shift;
  std::int32_t nt = -1;    // ActionKind::Nt
  std::int32_t word = -1;  // ActionKind::Gen

  static Action make_nt(std::int32_t nt) { return {ActionKind::Nt, nt, -1}; }
  static Action make_shift() { return {ActionKind::Shift, -1, -1}; }
  static Action make_gen(std::int32_t word) { return {ActionKind::Gen, -1, word}; }
  static Action make_reduce() { return {ActionKind::Reduce, -1, -1}; }
  bool operator==(const Action&) const = default;
};

inline int num_action_types(int num_nonterminals) { return num_nonterminals + 2; }
int action_index(const Action& a);
Action action_from_index(int index, TransitionMode mode, std::int32_t word = -1);

// Reachability limits guaranteeing that every legal derivation terminates.
struct Constraints {
  int max_open_nt = 100;
  int max_words = 120;
  static Constraints unbounded();
};

struct StackEntry {
  enum class Kind : std::uint8_t { Open, Terminal, Subtree };
  Kind kind = Kind::Open;
  std::int32_t nt = -1;
  std::int32_t word = -1;
};

// Shared stack/buffer configuration for both transition systems. Plain value
// type; all transition functions are re-entrant.
struct ParserState {
  TransitionMode mode = TransitionMode::Discriminative;
  std::vector<StackEntry> stack;
  // Discriminative: the full sentence, with buffer_pos marking the front.
  // Generative: the output buffer of generated words (grows with GEN).
  std::vector<std::int32_t> buffer;
  std::size_t buffer_pos = 0;
  std::vector<std::int32_t> open_positions;  // stack indices of open markers
  int step = 0;

  static ParserState initial_discriminative(std::vector<std::int32_t> words);
  static ParserState initial_generative();

  int open_nt() const { return static_cast<int>(open_positions.size()); }
  std::int32_t parent_nt() const;  // -1 when no constituent is open
  bool top_is_open() const;
  std::size_t buffer_remaining() const;
  std::size_t words_generated() const { return buffer.size(); }
  std::int32_t front_word() const;
  bool is_terminal() const;
};

struct LegalKinds {
  bool terminal = false;  // SHIFT (discriminative) or GEN (generative)
  bool reduce = false;
  bool nt = false;        // all NT(X) jointly
  bool any() const { return terminal || reduce || nt; }
};

// Which action kinds keep a terminal state reachable. Throws "already-final"
// for terminal states.
LegalKinds legal_action_kinds(const ParserState& state, const Constraints& limits);
std::vector<Action> legal_actions(const ParserState& state, int num_nonterminals,
                                  const Constraints& limits);
std::vector<int> legal_action_indices(const ParserState& state, int num_nonterminals,
                                      const Constraints& limits);

bool is_action_legal(const ParserState& state, const Action& a, const Constraints& limits);
void apply_action_inplace(ParserState& state, const Action& a, const Constraints& limits);
ParserState apply_action(const ParserState& state, const Action& a, const Constraints& limits);

// Text-level action token; the serialized form is `NT(LABEL)`, `SHIFT`,
// `GEN(word)` and `REDUCE`, space-separated, one sentence per line.
struct ActionToken {
  ActionKind kind = ActionKind::Shift;
  std::string label;  // Nt
  std::string word;   // Gen
  bool operator==(const ActionToken&) const = default;
};

// Unique top-down depth-first action sequence deriving the tree.
std::vector<ActionToken> oracle_tokens(const Tree& tree, TransitionMode mode);

// Inverse of oracle_tokens. For discriminative sequences `words` supplies the
// terminals (with optional `pos`); generative sequences take them from the
// GEN arguments when `words` is empty.
Tree tree_from_action_tokens(std::span<const ActionToken> tokens,
                             std::span<const std::string> words,
                             std::span<const std::string> pos);

std::string action_tokens_to_line(std::span<const ActionToken> tokens);
std::vector<ActionToken> action_tokens_from_line(const std::string& line);

}  // namespace treelm

#endif  // TREELM_TRANSITIONS_HPP
