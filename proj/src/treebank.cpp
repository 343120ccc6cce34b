#include "treelm/treebank.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace treelm {

// --------------------------------------------------------------------- Vocab

Vocab::Vocab() {
  intern_word(kUnkWord, 0);
  intern_pos(kUnkPos);
}

int Vocab::word_id(const std::string& w) const {
  auto it = word_ids_.find(w);
  return it == word_ids_.end() ? 0 : it->second;
}

int Vocab::nt_id(const std::string& label) const {
  auto it = nt_ids_.find(label);
  if (it == nt_ids_.end()) fail(ErrorCode::Invalid, "unknown nonterminal: " + label);
  return it->second;
}

std::optional<int> Vocab::find_nt(const std::string& label) const {
  auto it = nt_ids_.find(label);
  if (it == nt_ids_.end()) return std::nullopt;
  return it->second;
}

int Vocab::pos_id(const std::string& tag) const {
  auto it = pos_ids_.find(tag);
  return it == pos_ids_.end() ? 0 : it->second;
}

int Vocab::intern_word(const std::string& w, std::int64_t count) {
  auto it = word_ids_.find(w);
  if (it != word_ids_.end()) {
    counts_[it->second] += count;
    return it->second;
  }
  int id = static_cast<int>(words_.size());
  words_.push_back(w);
  counts_.push_back(count);
  word_ids_.emplace(w, id);
  return id;
}

int Vocab::intern_nt(const std::string& label) {
  auto it = nt_ids_.find(label);
  if (it != nt_ids_.end()) return it->second;
  int id = static_cast<int>(nts_.size());
  nts_.push_back(label);
  nt_ids_.emplace(label, id);
  return id;
}

int Vocab::intern_pos(const std::string& tag) {
  auto it = pos_ids_.find(tag);
  if (it != pos_ids_.end()) return it->second;
  int id = static_cast<int>(pos_.size());
  pos_.push_back(tag);
  pos_ids_.emplace(tag, id);
  return id;
}

void Vocab::serialize(std::ostream& os) const {
  os << "vocab v1\n";
  os << "words " << words_.size() << "\n";
  for (size_t i = 0; i < words_.size(); ++i) os << words_[i] << " " << counts_[i] << "\n";
  os << "nonterminals " << nts_.size() << "\n";
  for (const auto& n : nts_) os << n << "\n";
  os << "pos " << pos_.size() << "\n";
  for (const auto& p : pos_) os << p << "\n";
}

Vocab Vocab::deserialize(std::istream& is) {
  std::string header;
  std::getline(is, header);
  if (header != "vocab v1") fail(ErrorCode::Format, "bad vocab header: " + header);
  Vocab v;
  v.words_.clear();
  v.counts_.clear();
  v.word_ids_.clear();
  v.pos_.clear();
  v.pos_ids_.clear();
  std::string tag;
  size_t n = 0;
  is >> tag >> n;
  if (tag != "words") fail(ErrorCode::Format, "bad vocab words section");
  for (size_t i = 0; i < n; ++i) {
    std::string w;
    std::int64_t c;
    is >> w >> c;
    v.words_.push_back(w);
    v.counts_.push_back(c);
    v.word_ids_.emplace(w, static_cast<int>(i));
  }
  is >> tag >> n;
  if (tag != "nonterminals") fail(ErrorCode::Format, "bad vocab nonterminal section");
  for (size_t i = 0; i < n; ++i) {
    std::string s;
    is >> s;
    v.intern_nt(s);
  }
  is >> tag >> n;
  if (tag != "pos") fail(ErrorCode::Format, "bad vocab pos section");
  for (size_t i = 0; i < n; ++i) {
    std::string s;
    is >> s;
    if (i == 0 && s != kUnkPos) fail(ErrorCode::Format, "vocab pos 0 must be " + kUnkPos);
    v.pos_.push_back(s);
    v.pos_ids_.emplace(s, static_cast<int>(i));
  }
  if (!is) fail(ErrorCode::Format, "truncated vocab block");
  if (v.words_.empty() || v.words_[0] != kUnkWord)
    fail(ErrorCode::Format, "vocab word 0 must be " + kUnkWord);
  return v;
}

bool Vocab::operator==(const Vocab& other) const {
  return words_ == other.words_ && nts_ == other.nts_ && pos_ == other.pos_ &&
         counts_ == other.counts_;
}

// ------------------------------------------------------------ bracket reader

namespace {

struct BracketToken {
  enum Kind { Open, Close, Symbol } kind;
  std::string text;
  int line;
};

class BracketLexer {
 public:
  BracketLexer(std::istream& is, std::string name) : is_(is), name_(std::move(name)) {}

  std::optional<BracketToken> next() {
    for (;;) {
      int c = is_.get();
      if (c == EOF) return std::nullopt;
      if (c == '\n') {
        ++line_;
        continue;
      }
      if (std::isspace(c)) continue;
      if (c == '(') return BracketToken{BracketToken::Open, "(", line_};
      if (c == ')') return BracketToken{BracketToken::Close, ")", line_};
      std::string sym(1, static_cast<char>(c));
      while (is_.peek() != EOF && !std::isspace(is_.peek()) && is_.peek() != '(' &&
             is_.peek() != ')')
        sym += static_cast<char>(is_.get());
      return BracketToken{BracketToken::Symbol, sym, line_};
    }
  }

  int line() const { return line_; }
  const std::string& name() const { return name_; }

 private:
  std::istream& is_;
  std::string name_;
  int line_ = 1;
};

[[noreturn]] void parse_error(const BracketLexer& lex, int line, const std::string& why) {
  fail(ErrorCode::Format, lex.name() + ":" + std::to_string(line) + ": " + why);
}

// Raw parse: every bracketed group becomes an internal node (possibly with an
// empty label for PTB's outer wrapper); bare symbols become leaves.
Tree parse_group(BracketLexer& lex, int open_line) {
  Tree node;
  auto tok = lex.next();
  if (!tok) parse_error(lex, open_line, "unbalanced brackets (unexpected end of input)");
  if (tok->kind == BracketToken::Symbol) {
    node.label = tok->text;
    tok = lex.next();
  }
  for (;;) {
    if (!tok) parse_error(lex, open_line, "unbalanced brackets (unexpected end of input)");
    if (tok->kind == BracketToken::Close) break;
    if (tok->kind == BracketToken::Open) {
      node.children.push_back(parse_group(lex, tok->line));
    } else {
      node.children.push_back(Tree::make_leaf(tok->text));
    }
    tok = lex.next();
  }
  return node;
}

std::string strip_function_tags(const std::string& label) {
  // PTB function tags and coindices: NP-SBJ-1, ADVP=2. Labels that *start*
  // with '-' (-NONE-, -LRB-) are kept whole.
  if (label.empty() || label[0] == '-') return label;
  size_t cut = label.find_first_of("-=");
  return cut == std::string::npos ? label : label.substr(0, cut);
}

bool is_trace(const Tree& t) {
  return !t.leaf && t.label == "-NONE-";
}

// Applies the preprocessing pass: collapse preterminals into leaves, drop
// traces and empty constituents, strip function tags, collapse X-over-X
// unaries. Returns nullopt when the subtree vanishes.
std::optional<Tree> normalize(const Tree& raw) {
  if (raw.leaf) return raw;
  if (is_trace(raw)) return std::nullopt;
  std::string label = strip_function_tags(raw.label);
  // preterminal: single bare-word child
  if (raw.children.size() == 1 && raw.children[0].leaf && raw.children[0].pos.empty())
    return Tree::make_leaf(raw.children[0].word, raw.label);
  std::vector<Tree> kids;
  for (const Tree& c : raw.children) {
    auto k = normalize(c);
    if (k) kids.push_back(std::move(*k));
  }
  if (kids.empty()) return std::nullopt;
  if (kids.size() == 1 && !kids[0].leaf && kids[0].label == label) return kids[0];
  return Tree::make_internal(std::move(label), std::move(kids));
}

}  // namespace

TreebankReadResult read_treebank_stream(std::istream& is, const std::string& name) {
  BracketLexer lex(is, name);
  TreebankReadResult result;
  for (;;) {
    auto tok = lex.next();
    if (!tok) break;
    if (tok->kind != BracketToken::Open)
      parse_error(lex, tok->line, "expected '(' at start of tree, found '" + tok->text + "'");
    Tree raw = parse_group(lex, tok->line);
    // PTB wraps each tree in an extra labelless bracket
    if (raw.label.empty() && raw.children.size() == 1 && !raw.children[0].leaf)
      raw = std::move(raw.children[0]);
    if (raw.children.empty()) {
      ++result.skipped_empty;
      continue;
    }
    auto tree = normalize(raw);
    if (!tree || tree->leaf) {
      ++result.skipped_empty;
      continue;
    }
    result.trees.push_back(std::move(*tree));
  }
  return result;
}

TreebankReadResult read_treebank(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::Io, "cannot open treebank: " + path);
  return read_treebank_stream(is, path);
}

std::vector<Instance> read_token_file(const std::string& path, const Vocab& vocab) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::Io, "cannot open token file: " + path);
  std::vector<Instance> out;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::vector<std::string> words;
    std::string w;
    while (ls >> w) words.push_back(w);
    if (words.empty()) continue;
    out.push_back(make_instance_from_tokens(words, {}, vocab));
  }
  return out;
}

// --------------------------------------------------------------- build_vocab

Vocab build_vocab(std::span<const Tree> trees, int min_count) {
  if (trees.empty()) fail(ErrorCode::Invalid, "build_vocab on an empty corpus");
  // first pass: counts in first-occurrence order
  std::vector<std::string> word_order, nt_order, pos_order;
  std::unordered_map<std::string, std::int64_t> counts;
  std::unordered_map<std::string, bool> seen_nt, seen_pos;
  std::vector<const Tree*> stack;
  for (const Tree& t : trees) {
    stack.push_back(&t);
    while (!stack.empty()) {
      const Tree* n = stack.back();
      stack.pop_back();
      if (n->leaf) {
        auto [it, fresh] = counts.emplace(n->word, 0);
        if (fresh) word_order.push_back(n->word);
        ++it->second;
        if (!n->pos.empty() && !seen_pos[n->pos]) {
          seen_pos[n->pos] = true;
          pos_order.push_back(n->pos);
        }
      } else {
        if (!seen_nt[n->label]) {
          seen_nt[n->label] = true;
          nt_order.push_back(n->label);
        }
        for (auto it = n->children.rbegin(); it != n->children.rend(); ++it)
          stack.push_back(&*it);
      }
    }
  }
  Vocab v;
  for (const auto& w : word_order) {
    std::int64_t c = counts[w];
    if (c >= min_count)
      v.intern_word(w, c);
    else
      v.intern_word(kUnkWord, c);  // aggregate into <unk>
  }
  for (const auto& n : nt_order) v.intern_nt(n);
  for (const auto& p : pos_order) v.intern_pos(p);
  return v;
}

// ------------------------------------------------------------- pretrained io

PretrainedTable load_pretrained(const std::string& path, const Vocab& vocab) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::Io, "cannot open pretrained vectors: " + path);
  PretrainedTable table;
  table.present.assign(vocab.num_words(), false);
  std::string line;
  int lineno = 0;
  std::vector<std::vector<real>> rows;
  std::vector<int> row_ids;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    std::vector<real> vec;
    real x;
    while (ls >> x) vec.push_back(x);
    if (vec.empty())
      fail(ErrorCode::Format, path + ":" + std::to_string(lineno) + ": no vector components");
    if (table.dim == 0) table.dim = static_cast<int>(vec.size());
    if (static_cast<int>(vec.size()) != table.dim)
      fail(ErrorCode::Format, path + ":" + std::to_string(lineno) + ": expected " +
                                  std::to_string(table.dim) + " components, found " +
                                  std::to_string(vec.size()));
    int id = vocab.word_id(word);
    if (id == 0 && word != kUnkWord) continue;  // out of vocabulary
    rows.push_back(std::move(vec));
    row_ids.push_back(id);
  }
  table.vectors = Tensor(vocab.num_words(), table.dim == 0 ? 1 : table.dim);
  if (table.dim == 0) table.dim = 1;
  for (size_t k = 0; k < rows.size(); ++k) {
    table.present[row_ids[k]] = true;
    for (int c = 0; c < table.dim; ++c) table.vectors(row_ids[k], c) = rows[k][c];
  }
  return table;
}

// ----------------------------------------------------------------- instances

Instance make_instance(const Tree& tree, const Vocab& vocab) {
  Instance inst;
  inst.raw_words = tree_words(tree);
  inst.raw_pos = tree_pos_tags(tree);
  for (const auto& w : inst.raw_words) inst.words.push_back(vocab.word_id(w));
  for (const auto& p : inst.raw_pos) inst.pos.push_back(vocab.pos_id(p));
  inst.gold_tree = tree;
  attach_gold_actions(inst, vocab);
  return inst;
}

std::vector<Instance> make_instances(std::span<const Tree> trees, const Vocab& vocab) {
  std::vector<Instance> out;
  out.reserve(trees.size());
  for (const Tree& t : trees) out.push_back(make_instance(t, vocab));
  return out;
}

Instance make_instance_from_tokens(std::span<const std::string> words,
                                   std::span<const std::string> pos, const Vocab& vocab) {
  Instance inst;
  inst.raw_words.assign(words.begin(), words.end());
  if (pos.empty())
    inst.raw_pos.assign(words.size(), kUnkPos);
  else
    inst.raw_pos.assign(pos.begin(), pos.end());
  for (const auto& w : inst.raw_words) inst.words.push_back(vocab.word_id(w));
  for (const auto& p : inst.raw_pos) inst.pos.push_back(vocab.pos_id(p));
  return inst;
}

std::string tagged_token(const std::string& word, const std::string& pos) {
  std::string out;
  for (char c : word) {
    if (c == '/') out += '\\';
    out += c;
  }
  if (!pos.empty()) {
    out += '/';
    out += pos;
  }
  return out;
}

std::pair<std::string, std::string> split_tagged_token(const std::string& token) {
  std::size_t cut = std::string::npos;
  for (std::size_t i = 0; i < token.size(); ++i) {
    if (token[i] == '\\' && i + 1 < token.size() && token[i + 1] == '/') {
      ++i;
      continue;
    }
    if (token[i] == '/') cut = i;
  }
  std::string raw_word = cut == std::string::npos ? token : token.substr(0, cut);
  std::string pos = cut == std::string::npos ? std::string() : token.substr(cut + 1);
  std::string word;
  for (std::size_t i = 0; i < raw_word.size(); ++i) {
    if (raw_word[i] == '\\' && i + 1 < raw_word.size() && raw_word[i + 1] == '/') continue;
    word += raw_word[i];
  }
  return {word, pos};
}

std::vector<Action> actions_from_tokens(std::span<const ActionToken> tokens, const Vocab& vocab) {
  std::vector<Action> out;
  out.reserve(tokens.size());
  for (const ActionToken& t : tokens) {
    switch (t.kind) {
      case ActionKind::Nt:
        out.push_back(Action::make_nt(vocab.nt_id(t.label)));
        break;
      case ActionKind::Shift:
        out.push_back(Action::make_shift());
        break;
      case ActionKind::Gen:
        out.push_back(Action::make_gen(vocab.word_id(t.word)));
        break;
      case ActionKind::Reduce:
        out.push_back(Action::make_reduce());
        break;
    }
  }
  return out;
}

std::vector<ActionToken> tokens_from_actions(std::span<const Action> actions, const Vocab& vocab,
                                             std::span<const std::string> surface_words) {
  std::vector<ActionToken> out;
  out.reserve(actions.size());
  size_t word_at = 0;
  for (const Action& a : actions) {
    switch (a.kind) {
      case ActionKind::Nt:
        out.push_back({ActionKind::Nt, vocab.nt(a.nt), ""});
        break;
      case ActionKind::Shift:
        out.push_back({ActionKind::Shift, "", ""});
        ++word_at;
        break;
      case ActionKind::Gen: {
        std::string w =
            word_at < surface_words.size() ? surface_words[word_at] : vocab.word(a.word);
        out.push_back({ActionKind::Gen, "", std::move(w)});
        ++word_at;
        break;
      }
      case ActionKind::Reduce:
        out.push_back({ActionKind::Reduce, "", ""});
        break;
    }
  }
  return out;
}

std::vector<Action> oracle_actions(const Tree& tree, TransitionMode mode, const Vocab& vocab) {
  return actions_from_tokens(oracle_tokens(tree, mode), vocab);
}

void attach_gold_actions(Instance& inst, const Vocab& vocab) {
  if (!inst.gold_tree) return;
  inst.gold_disc = oracle_actions(*inst.gold_tree, TransitionMode::Discriminative, vocab);
  inst.gold_gen = oracle_actions(*inst.gold_tree, TransitionMode::Generative, vocab);
}

}  // namespace treelm
