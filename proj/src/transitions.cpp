#include "treelm/transitions.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace treelm {

Tree Tree::make_leaf(std::string word, std::string pos) {
  Tree t;
  t.leaf = true;
  t.word = std::move(word);
  t.pos = std::move(pos);
  return t;
}

Tree Tree::make_internal(std::string label, std::vector<Tree> children) {
  if (children.empty()) fail(ErrorCode::Invalid, "internal tree node with no children");
  Tree t;
  t.label = std::move(label);
  t.children = std::move(children);
  return t;
}

static void collect_words(const Tree& t, std::vector<std::string>& words,
                          std::vector<std::string>* tags) {
  if (t.leaf) {
    words.push_back(t.word);
    if (tags) tags->push_back(t.pos);
    return;
  }
  for (const Tree& c : t.children) collect_words(c, words, tags);
}

std::vector<std::string> tree_words(const Tree& t) {
  std::vector<std::string> words;
  collect_words(t, words, nullptr);
  return words;
}

std::vector<std::string> tree_pos_tags(const Tree& t) {
  std::vector<std::string> words, tags;
  collect_words(t, words, &tags);
  return tags;
}

static void print_tree(const Tree& t, std::string& out) {
  if (t.leaf) {
    if (t.pos.empty()) {
      out += t.word;
    } else {
      out += '(';
      out += t.pos;
      out += ' ';
      out += t.word;
      out += ')';
    }
    return;
  }
  out += '(';
  out += t.label;
  for (const Tree& c : t.children) {
    out += ' ';
    print_tree(c, out);
  }
  out += ')';
}

std::string tree_to_string(const Tree& t) {
  std::string out;
  print_tree(t, out);
  return out;
}

// ------------------------------------------------------------------- actions

int action_index(const Action& a) {
  switch (a.kind) {
    case ActionKind::Shift:
    case ActionKind::Gen:
      return 0;
    case ActionKind::Reduce:
      return 1;
    case ActionKind::Nt:
      return 2 + a.nt;
  }
  fail(ErrorCode::Invalid, "bad action kind");
}

Action action_from_index(int index, TransitionMode mode, std::int32_t word) {
  if (index == 0)
    return mode == TransitionMode::Generative ? Action::make_gen(word) : Action::make_shift();
  if (index == 1) return Action::make_reduce();
  if (index < 0) fail(ErrorCode::Invalid, "bad action index");
  return Action::make_nt(index - 2);
}

Constraints Constraints::unbounded() {
  return Constraints{std::numeric_limits<int>::max(), std::numeric_limits<int>::max()};
}

// --------------------------------------------------------------- ParserState

ParserState ParserState::initial_discriminative(std::vector<std::int32_t> words) {
  ParserState s;
  s.mode = TransitionMode::Discriminative;
  s.buffer = std::move(words);
  return s;
}

ParserState ParserState::initial_generative() {
  ParserState s;
  s.mode = TransitionMode::Generative;
  return s;
}

std::int32_t ParserState::parent_nt() const {
  if (open_positions.empty()) return -1;
  return stack[open_positions.back()].nt;
}

bool ParserState::top_is_open() const {
  return !stack.empty() && stack.back().kind == StackEntry::Kind::Open;
}

std::size_t ParserState::buffer_remaining() const {
  if (mode == TransitionMode::Generative) return 0;
  return buffer.size() - buffer_pos;
}

std::int32_t ParserState::front_word() const {
  if (mode == TransitionMode::Generative || buffer_pos >= buffer.size())
    fail(ErrorCode::Invalid, "front_word on exhausted buffer");
  return buffer[buffer_pos];
}

bool ParserState::is_terminal() const {
  if (stack.size() != 1 || stack[0].kind != StackEntry::Kind::Subtree) return false;
  if (!open_positions.empty()) return false;
  if (mode == TransitionMode::Discriminative && buffer_remaining() != 0) return false;
  return true;
}

// ------------------------------------------------------------------ legality

static std::string state_summary(const ParserState& s) {
  std::ostringstream os;
  os << (s.mode == TransitionMode::Generative ? "gen" : "disc") << " state at step " << s.step
     << ": stack=" << s.stack.size() << " open=" << s.open_nt();
  if (s.mode == TransitionMode::Discriminative)
    os << " buffer=" << s.buffer_remaining();
  else
    os << " generated=" << s.words_generated();
  return os.str();
}

LegalKinds legal_action_kinds(const ParserState& s, const Constraints& limits) {
  if (s.is_terminal()) fail(ErrorCode::Invalid, "already-final: " + state_summary(s));
  LegalKinds k;
  int open = s.open_nt();
  if (s.mode == TransitionMode::Discriminative) {
    std::size_t remaining = s.buffer_remaining();
    // NT needs a word left to put inside it; SHIFT needs an open constituent
    // to attach to; closing the outermost NT early would strand the rest of
    // the buffer.
    k.nt = remaining > 0 && open < limits.max_open_nt && (open > 0 || s.stack.empty());
    k.terminal = remaining > 0 && open > 0;
    k.reduce = open > 0 && !s.top_is_open() && !(open == 1 && remaining > 0);
  } else {
    std::size_t generated = s.words_generated();
    bool words_left = generated < static_cast<std::size_t>(limits.max_words);
    k.nt = words_left && open < limits.max_open_nt && (open > 0 || s.stack.empty());
    k.terminal = words_left && open > 0;
    k.reduce = open > 0 && !s.top_is_open();
  }
  return k;
}

std::vector<Action> legal_actions(const ParserState& s, int num_nonterminals,
                                  const Constraints& limits) {
  LegalKinds k = legal_action_kinds(s, limits);
  std::vector<Action> out;
  if (k.terminal)
    out.push_back(s.mode == TransitionMode::Generative ? Action::make_gen(-1)
                                                       : Action::make_shift());
  if (k.reduce) out.push_back(Action::make_reduce());
  if (k.nt)
    for (int x = 0; x < num_nonterminals; ++x) out.push_back(Action::make_nt(x));
  return out;
}

std::vector<int> legal_action_indices(const ParserState& s, int num_nonterminals,
                                      const Constraints& limits) {
  LegalKinds k = legal_action_kinds(s, limits);
  std::vector<int> out;
  if (k.terminal) out.push_back(0);
  if (k.reduce) out.push_back(1);
  if (k.nt)
    for (int x = 0; x < num_nonterminals; ++x) out.push_back(2 + x);
  return out;
}

bool is_action_legal(const ParserState& s, const Action& a, const Constraints& limits) {
  if (s.is_terminal()) return false;
  LegalKinds k = legal_action_kinds(s, limits);
  switch (a.kind) {
    case ActionKind::Shift:
      return k.terminal && s.mode == TransitionMode::Discriminative;
    case ActionKind::Gen:
      return k.terminal && s.mode == TransitionMode::Generative;
    case ActionKind::Reduce:
      return k.reduce;
    case ActionKind::Nt:
      return k.nt && a.nt >= 0;
  }
  return false;
}

void apply_action_inplace(ParserState& s, const Action& a, const Constraints& limits) {
  if (!is_action_legal(s, a, limits)) {
    std::ostringstream os;
    os << "illegal-transition: action index " << action_index(a) << " at " << state_summary(s);
    fail(ErrorCode::Invalid, os.str());
  }
  switch (a.kind) {
    case ActionKind::Nt:
      s.open_positions.push_back(static_cast<std::int32_t>(s.stack.size()));
      s.stack.push_back({StackEntry::Kind::Open, a.nt, -1});
      break;
    case ActionKind::Shift: {
      std::int32_t w = s.buffer[s.buffer_pos++];
      s.stack.push_back({StackEntry::Kind::Terminal, -1, w});
      break;
    }
    case ActionKind::Gen:
      s.buffer.push_back(a.word);
      s.stack.push_back({StackEntry::Kind::Terminal, -1, a.word});
      break;
    case ActionKind::Reduce: {
      std::int32_t open_pos = s.open_positions.back();
      std::int32_t nt = s.stack[open_pos].nt;
      s.open_positions.pop_back();
      s.stack.resize(open_pos);
      s.stack.push_back({StackEntry::Kind::Subtree, nt, -1});
      break;
    }
  }
  ++s.step;
}

ParserState apply_action(const ParserState& state, const Action& a, const Constraints& limits) {
  ParserState next = state;
  apply_action_inplace(next, a, limits);
  return next;
}

// -------------------------------------------------------------------- oracle

static void oracle_visit(const Tree& t, TransitionMode mode, std::vector<ActionToken>& out) {
  if (t.leaf) {
    if (mode == TransitionMode::Generative)
      out.push_back({ActionKind::Gen, "", t.word});
    else
      out.push_back({ActionKind::Shift, "", ""});
    return;
  }
  out.push_back({ActionKind::Nt, t.label, ""});
  for (const Tree& c : t.children) oracle_visit(c, mode, out);
  out.push_back({ActionKind::Reduce, "", ""});
}

std::vector<ActionToken> oracle_tokens(const Tree& tree, TransitionMode mode) {
  if (tree.leaf) fail(ErrorCode::Invalid, "oracle of a bare terminal");
  std::vector<ActionToken> out;
  oracle_visit(tree, mode, out);
  return out;
}

// ---------------------------------------------------------- tree from actions

namespace {

[[noreturn]] void malformed(std::size_t step, const std::string& why) {
  fail(ErrorCode::Format,
       "malformed-derivation at step " + std::to_string(step) + ": " + why);
}

}  // namespace

Tree tree_from_action_tokens(std::span<const ActionToken> tokens,
                             std::span<const std::string> words,
                             std::span<const std::string> pos) {
  bool generative = false;
  for (const ActionToken& t : tokens)
    if (t.kind == ActionKind::Gen) generative = true;
  for (const ActionToken& t : tokens)
    if (generative && t.kind == ActionKind::Shift)
      fail(ErrorCode::Format, "derivation mixes SHIFT and GEN");

  // shadow stack of partially built trees; open markers hold a label only.
  // Validation is structural: the reachability limits used for scoring do not
  // apply when replaying a full sequence.
  struct Item {
    bool open;
    std::string label;
    Tree tree;
  };
  std::vector<Item> build;
  int opens = 0;
  std::size_t next_word = 0;

  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const ActionToken& tok = tokens[i];
    if (opens == 0 && build.size() == 1 && !build[0].open)
      malformed(i, "actions continue after a complete derivation");
    switch (tok.kind) {
      case ActionKind::Nt:
        build.push_back({true, tok.label, {}});
        ++opens;
        break;
      case ActionKind::Shift:
      case ActionKind::Gen: {
        if (opens == 0) malformed(i, "terminal outside any constituent");
        std::string word;
        if (next_word < words.size())
          word = words[next_word];
        else if (tok.kind == ActionKind::Gen)
          word = tok.word;
        else
          malformed(i, "SHIFT beyond the supplied word sequence");
        std::string tag = next_word < pos.size() ? pos[next_word] : std::string();
        ++next_word;
        build.push_back({false, "", Tree::make_leaf(std::move(word), std::move(tag))});
        break;
      }
      case ActionKind::Reduce: {
        std::vector<Tree> children;
        while (!build.empty() && !build.back().open) {
          children.push_back(std::move(build.back().tree));
          build.pop_back();
        }
        if (build.empty()) malformed(i, "REDUCE without an open nonterminal");
        if (children.empty()) malformed(i, "REDUCE of an empty constituent");
        std::reverse(children.begin(), children.end());
        std::string label = std::move(build.back().label);
        build.pop_back();
        --opens;
        build.push_back({false, "", Tree::make_internal(std::move(label), std::move(children))});
        break;
      }
    }
  }
  if (opens != 0 || build.size() != 1 || build[0].open)
    malformed(tokens.size(), "derivation stops before a complete tree");
  if (!words.empty() && next_word != words.size())
    malformed(tokens.size(), "word count does not match terminal actions");
  return std::move(build.back().tree);
}

// -------------------------------------------------------------- serialization

std::string action_tokens_to_line(std::span<const ActionToken> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    switch (tokens[i].kind) {
      case ActionKind::Nt:
        out += "NT(";
        out += tokens[i].label;
        out += ')';
        break;
      case ActionKind::Shift:
        out += "SHIFT";
        break;
      case ActionKind::Gen:
        out += "GEN(";
        out += tokens[i].word;
        out += ')';
        break;
      case ActionKind::Reduce:
        out += "REDUCE";
        break;
    }
  }
  return out;
}

std::vector<ActionToken> action_tokens_from_line(const std::string& line) {
  std::vector<ActionToken> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) {
    if (tok == "SHIFT") {
      out.push_back({ActionKind::Shift, "", ""});
    } else if (tok == "REDUCE") {
      out.push_back({ActionKind::Reduce, "", ""});
    } else if (tok.rfind("NT(", 0) == 0 && tok.back() == ')') {
      out.push_back({ActionKind::Nt, tok.substr(3, tok.size() - 4), ""});
    } else if (tok.rfind("GEN(", 0) == 0 && tok.back() == ')') {
      out.push_back({ActionKind::Gen, "", tok.substr(4, tok.size() - 5)});
    } else {
      fail(ErrorCode::Format, "unrecognized action token: " + tok);
    }
  }
  return out;
}

}  // namespace treelm
