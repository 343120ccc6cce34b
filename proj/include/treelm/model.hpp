#ifndef TREELM_MODEL_HPP
#define TREELM_MODEL_HPP

#include <memory>
#include <string>

#include "treelm/config.hpp"
#include "treelm/nn.hpp"
#include "treelm/tensor.hpp"
#include "treelm/treebank.hpp"

namespace treelm {

// Recognition model q(a | x). Stack items, composed subtrees and nonterminal
// embeddings share the stack-LSTM input dimension (= enc_lstm_dim).
struct EncoderParams {
  Param* word_emb = nullptr;  // learned word vectors
  Param* pos_emb = nullptr;
  Param* nt_emb = nullptr;
  Param* term_w = nullptr;  // word input -> stack item
  Param* term_b = nullptr;
  Param* comp_w = nullptr;  // [mean(children) ; nt] -> stack item
  Param* comp_b = nullptr;
  LstmParams buf_fwd, buf_bwd, stack;
  AttentionParams att;
  Param* null_buffer = nullptr;  // i_t / adaptive buffer stand-in once exhausted
  Param* null_parent = nullptr;
  Param* state_w_in = nullptr;   // v_t = W_out tanh(W_in [e,i,ibar,n] + b)
  Param* state_b = nullptr;
  Param* state_w_out = nullptr;
  Param* act_w = nullptr;  // action output embeddings, one row per action type
  Param* act_b = nullptr;
};

// Generative model p(x, a); one network scores both actions and words off u_t.
struct DecoderParams {
  Param* word_emb = nullptr;
  Param* nt_emb = nullptr;
  Param* term_w = nullptr;
  Param* term_b = nullptr;
  Param* comp_w = nullptr;
  Param* comp_b = nullptr;
  LstmParams out_buf, stack;
  Param* null_parent = nullptr;
  Param* state_w_in = nullptr;  // u_t = W_out tanh(W_in [d,o,n] + b)
  Param* state_b = nullptr;
  Param* state_w_out = nullptr;
  Param* act_w = nullptr;
  Param* act_b = nullptr;
  Param* word_w = nullptr;  // word output embeddings
  Param* word_b = nullptr;
};

struct Model {
  ModelConfig cfg;
  Vocab vocab;
  ParamStore params;
  Param* pretrained = nullptr;  // frozen, zero rows for uncovered words
  EncoderParams enc;
  DecoderParams dec;

  Model(Vocab vocab, ModelConfig cfg, Rng init_rng, const PretrainedTable* table = nullptr);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  int num_actions() const { return vocab.num_actions(); }
};

// Versioned binary checkpoint: header (magic, version, dimension table), named
// parameter blobs as little-endian float32, then the serialized vocab.
void save_checkpoint(const Model& model, const std::string& path);
std::unique_ptr<Model> load_checkpoint(const std::string& path);

}  // namespace treelm

#endif  // TREELM_MODEL_HPP
