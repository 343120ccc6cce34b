#include "treelm/model.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace treelm {

Model::Model(Vocab v, ModelConfig config, Rng init_rng, const PretrainedTable* table)
    : cfg(config), vocab(std::move(v)) {
  cfg.validate();
  if (table && table->dim != cfg.pretrained_dim)
    fail(ErrorCode::Invalid, "pretrained vector dimension " + std::to_string(table->dim) +
                                 " does not match configured " +
                                 std::to_string(cfg.pretrained_dim));
  Rng rng = init_rng;
  int vw = vocab.num_words();
  int vp = vocab.num_pos();
  int vn = vocab.num_nts();
  int na = vocab.num_actions();

  if (cfg.pretrained_dim > 0) {
    Tensor pre(vw, cfg.pretrained_dim);
    if (table) pre = table->vectors;
    pretrained = params.add_frozen("pretrained.word_emb", std::move(pre));
  }

  int eh = cfg.enc_lstm_dim;
  int ein = cfg.enc_word_input_dim();
  enc.word_emb = params.add("enc.word_emb", vw, cfg.learned_dim, ParamInit::UniformEmbed, rng);
  enc.pos_emb = params.add("enc.pos_emb", vp, cfg.pos_dim, ParamInit::UniformEmbed, rng);
  enc.nt_emb = params.add("enc.nt_emb", vn, eh, ParamInit::UniformEmbed, rng);
  enc.term_w = params.add("enc.term.w", eh, ein, ParamInit::Xavier, rng);
  enc.term_b = params.add("enc.term.b", eh, 1, ParamInit::Zeros, rng);
  enc.comp_w = params.add("enc.comp.w", eh, 2 * eh, ParamInit::Xavier, rng);
  enc.comp_b = params.add("enc.comp.b", eh, 1, ParamInit::Zeros, rng);
  enc.buf_fwd = LstmParams::create(params, "enc.buf_fwd", ein, eh, cfg.lstm_layers, rng);
  enc.buf_bwd = LstmParams::create(params, "enc.buf_bwd", ein, eh, cfg.lstm_layers, rng);
  enc.stack = LstmParams::create(params, "enc.stack", eh, eh, cfg.lstm_layers, rng);
  enc.att = AttentionParams::create(params, "enc.att", eh, 2 * eh, eh, rng);
  enc.null_buffer = params.add("enc.null_buffer", 2 * eh, 1, ParamInit::UniformEmbed, rng);
  enc.null_parent = params.add("enc.null_parent", eh, 1, ParamInit::UniformEmbed, rng);
  int efeat = eh + 2 * eh + 2 * eh + eh;  // [e_t, i_t, ibar_t, n_t]
  enc.state_w_in = params.add("enc.state.w_in", eh, efeat, ParamInit::Xavier, rng);
  enc.state_b = params.add("enc.state.b", eh, 1, ParamInit::Zeros, rng);
  enc.state_w_out = params.add("enc.state.w_out", cfg.enc_state_dim, eh, ParamInit::Xavier, rng);
  enc.act_w = params.add("enc.act.w", na, cfg.enc_state_dim, ParamInit::Xavier, rng);
  enc.act_b = params.add("enc.act.b", na, 1, ParamInit::Zeros, rng);

  int dh = cfg.dec_lstm_dim;
  int din = cfg.dec_word_input_dim();
  dec.word_emb = params.add("dec.word_emb", vw, cfg.learned_dim, ParamInit::UniformEmbed, rng);
  dec.nt_emb = params.add("dec.nt_emb", vn, dh, ParamInit::UniformEmbed, rng);
  dec.term_w = params.add("dec.term.w", dh, din, ParamInit::Xavier, rng);
  dec.term_b = params.add("dec.term.b", dh, 1, ParamInit::Zeros, rng);
  dec.comp_w = params.add("dec.comp.w", dh, 2 * dh, ParamInit::Xavier, rng);
  dec.comp_b = params.add("dec.comp.b", dh, 1, ParamInit::Zeros, rng);
  dec.out_buf = LstmParams::create(params, "dec.out_buf", din, dh, cfg.lstm_layers, rng);
  dec.stack = LstmParams::create(params, "dec.stack", dh, dh, cfg.lstm_layers, rng);
  dec.null_parent = params.add("dec.null_parent", dh, 1, ParamInit::UniformEmbed, rng);
  int dfeat = dh + dh + dh;  // [d_t, o_t, n_t]
  dec.state_w_in = params.add("dec.state.w_in", dh, dfeat, ParamInit::Xavier, rng);
  dec.state_b = params.add("dec.state.b", dh, 1, ParamInit::Zeros, rng);
  dec.state_w_out = params.add("dec.state.w_out", cfg.dec_state_dim, dh, ParamInit::Xavier, rng);
  dec.act_w = params.add("dec.act.w", na, cfg.dec_state_dim, ParamInit::Xavier, rng);
  dec.act_b = params.add("dec.act.b", na, 1, ParamInit::Zeros, rng);
  dec.word_w = params.add("dec.word.w", vw, cfg.dec_state_dim, ParamInit::Xavier, rng);
  dec.word_b = params.add("dec.word.b", vw, 1, ParamInit::Zeros, rng);
}

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[4] = {'T', 'L', 'M', 'C'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

float get_f32(std::istream& is) {
  std::uint32_t bits = get_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
  std::uint32_t n = get_u32(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  return s;
}

struct DimEntry {
  const char* key;
  real value;
};

std::vector<DimEntry> dim_table(const ModelConfig& c) {
  return {
      {"learned_dim", static_cast<real>(c.learned_dim)},
      {"pretrained_dim", static_cast<real>(c.pretrained_dim)},
      {"pos_dim", static_cast<real>(c.pos_dim)},
      {"enc_lstm_dim", static_cast<real>(c.enc_lstm_dim)},
      {"dec_lstm_dim", static_cast<real>(c.dec_lstm_dim)},
      {"lstm_layers", static_cast<real>(c.lstm_layers)},
      {"enc_dropout", c.enc_dropout},
      {"dec_dropout", c.dec_dropout},
      {"enc_state_dim", static_cast<real>(c.enc_state_dim)},
      {"dec_state_dim", static_cast<real>(c.dec_state_dim)},
      {"max_open_nt", static_cast<real>(c.max_open_nt)},
      {"max_sentence_len", static_cast<real>(c.max_sentence_len)},
  };
}

void apply_dim(ModelConfig& c, const std::string& key, real value) {
  if (key == "learned_dim") c.learned_dim = static_cast<int>(value);
  else if (key == "pretrained_dim") c.pretrained_dim = static_cast<int>(value);
  else if (key == "pos_dim") c.pos_dim = static_cast<int>(value);
  else if (key == "enc_lstm_dim") c.enc_lstm_dim = static_cast<int>(value);
  else if (key == "dec_lstm_dim") c.dec_lstm_dim = static_cast<int>(value);
  else if (key == "lstm_layers") c.lstm_layers = static_cast<int>(value);
  else if (key == "enc_dropout") c.enc_dropout = value;
  else if (key == "dec_dropout") c.dec_dropout = value;
  else if (key == "enc_state_dim") c.enc_state_dim = static_cast<int>(value);
  else if (key == "dec_state_dim") c.dec_state_dim = static_cast<int>(value);
  else if (key == "max_open_nt") c.max_open_nt = static_cast<int>(value);
  else if (key == "max_sentence_len") c.max_sentence_len = static_cast<int>(value);
  else fail(ErrorCode::Format, "checkpoint: unknown dimension entry " + key);
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCode::Io, "cannot write checkpoint: " + path);
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  auto dims = dim_table(model.cfg);
  put_u32(os, static_cast<std::uint32_t>(dims.size()));
  for (const auto& d : dims) {
    put_string(os, d.key);
    // dimensions stored as f32 like the blobs; dropout rates fit losslessly
    put_f32(os, static_cast<float>(d.value));
  }
  put_u32(os, static_cast<std::uint32_t>(model.params.size()));
  for (const auto& p : model.params.all()) {
    put_string(os, p->name);
    put_u32(os, static_cast<std::uint32_t>(p->rows()));
    put_u32(os, static_cast<std::uint32_t>(p->cols()));
    os.put(p->frozen ? 1 : 0);
    for (real v : p->value.data) put_f32(os, static_cast<float>(v));
  }
  std::ostringstream vs;
  model.vocab.serialize(vs);
  put_string(os, vs.str());
  if (!os) fail(ErrorCode::Io, "failed writing checkpoint: " + path);
}

std::unique_ptr<Model> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::Io, "cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    fail(ErrorCode::Format, "not a checkpoint file: " + path);
  std::uint32_t version = get_u32(is);
  if (version != kVersion)
    fail(ErrorCode::Format, "unsupported checkpoint version " + std::to_string(version));
  ModelConfig cfg;
  std::uint32_t ndims = get_u32(is);
  for (std::uint32_t i = 0; i < ndims; ++i) {
    std::string key = get_string(is);
    float v = get_f32(is);
    apply_dim(cfg, key, static_cast<real>(v));
  }

  struct Blob {
    std::string name;
    Tensor value;
    bool frozen;
  };
  std::uint32_t nparams = get_u32(is);
  std::vector<Blob> blobs;
  blobs.reserve(nparams);
  for (std::uint32_t i = 0; i < nparams; ++i) {
    Blob b;
    b.name = get_string(is);
    std::uint32_t rows = get_u32(is);
    std::uint32_t cols = get_u32(is);
    b.frozen = is.get() == 1;
    b.value = Tensor(static_cast<int>(rows), static_cast<int>(cols));
    for (auto& v : b.value.data) v = static_cast<real>(get_f32(is));
    if (!is) fail(ErrorCode::Format, "truncated checkpoint: " + path);
    blobs.push_back(std::move(b));
  }
  std::string vocab_text = get_string(is);
  if (!is) fail(ErrorCode::Format, "truncated checkpoint: " + path);
  std::istringstream vs(vocab_text);
  Vocab vocab = Vocab::deserialize(vs);

  auto model = std::make_unique<Model>(std::move(vocab), cfg, Rng(0));
  if (model->params.size() != blobs.size())
    fail(ErrorCode::Format, "checkpoint parameter count mismatch");
  for (const Blob& b : blobs) {
    Param* p = model->params.find(b.name);
    if (!p) fail(ErrorCode::Format, "checkpoint names unknown parameter " + b.name);
    if (p->rows() != b.value.rows || p->cols() != b.value.cols)
      fail(ErrorCode::Format, "checkpoint dimension mismatch for " + b.name + ": stored " +
                                  std::to_string(b.value.rows) + "x" +
                                  std::to_string(b.value.cols) + ", model expects " +
                                  std::to_string(p->rows()) + "x" + std::to_string(p->cols()));
    p->value.data = b.value.data;
  }
  return model;
}

}  // namespace treelm
