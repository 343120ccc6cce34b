/* treelm C API: transition-based constituency parsing and language modeling
 * with a generative decoder and a discriminative encoder behind one shared
 * library. All functions return tlm_status; on failure tlm_last_error()
 * holds a thread-local description of what went wrong. */
#ifndef TREELM_H
#define TREELM_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define TLM_API __declspec(dllexport)
#else
#define TLM_API __attribute__((visibility("default")))
#endif

typedef enum tlm_status {
  TLM_OK = 0,
  TLM_E_IO = 1,      /* missing/unreadable/unwritable file */
  TLM_E_FORMAT = 2,  /* malformed input */
  TLM_E_INVALID = 3, /* bad arguments or contract violation */
  TLM_E_NUMERIC = 4, /* non-finite loss / numeric abort */
  TLM_E_INTERNAL = 5
} tlm_status;

/* Opaque trained model handle. */
typedef struct tlm_model tlm_model;

TLM_API const char* tlm_version(void);
TLM_API const char* tlm_last_error(void);

/* Converts a bracketed treebank into one action line per tree
 * (`NT(LABEL)`, `SHIFT`/`GEN(word)`, `REDUCE`, space separated).
 * words_out (optional) receives one line of surface words per tree; it is
 * required later to invert discriminative action files. */
TLM_API tlm_status tlm_oracle_encode(const char* treebank_path, const char* actions_out,
                                     const char* words_out, int generative);

/* Inverse of tlm_oracle_encode. words_path is required for discriminative
 * action files; generative files carry their words in the GEN arguments. */
TLM_API tlm_status tlm_oracle_decode(const char* actions_path, const char* words_path,
                                     const char* trees_out);

/* Trains on a treebank ("trees") or plain token file ("tokens"; requires
 * lambda_a = 0 in the config) and writes the best checkpoint. Optional:
 * dev_path, pretrained_path, config_path, log_path (pass NULL). Passing
 * TLM_SEED_FROM_CONFIG keeps the config file's seed. */
#define TLM_SEED_FROM_CONFIG UINT64_MAX
TLM_API tlm_status tlm_train(const char* train_path, const char* train_format,
                             const char* dev_path, const char* pretrained_path,
                             const char* config_path, uint64_t seed, int threads,
                             const char* checkpoint_out, const char* log_path);

TLM_API tlm_status tlm_model_open(const char* checkpoint_path, tlm_model** out);
TLM_API void tlm_model_close(tlm_model* model);
/* Writes a short human-readable summary (dims, vocabulary sizes). */
TLM_API tlm_status tlm_model_info(const tlm_model* model, char* buf, size_t buf_len);

/* input_format: "trees" (bracketed, POS from the file) or "tokens" (one plain
 * sentence per line). method: "greedy" or "rerank"; samples is the rerank
 * pool size. Output: one bracketed tree per line, input order. */
TLM_API tlm_status tlm_parse_file(const tlm_model* model, const char* input_path,
                                  const char* input_format, const char* method, int samples,
                                  uint64_t seed, int threads, const char* trees_out);

/* Single-sentence parse. pos may be NULL (untagged input). The bracketed tree
 * is written to tree_out (NUL terminated); log_q / log_joint may be NULL. */
TLM_API tlm_status tlm_parse_sentence(const tlm_model* model, const char* const* words,
                                      const char* const* pos, size_t len, const char* method,
                                      int samples, uint64_t seed, char* tree_out,
                                      size_t tree_out_len, double* log_q, double* log_joint);

/* method: "importance" or "elbo". Writes a per-sentence TSV
 * (id, tokens, log_px, method, k, ess) plus a corpus summary line;
 * perplexity_out may be NULL. */
TLM_API tlm_status tlm_lm_eval_file(const tlm_model* model, const char* input_path,
                                    const char* input_format, const char* method, int samples,
                                    uint64_t seed, int threads, const char* tsv_out,
                                    double* perplexity_out);

/* Samples sentences from the generative model, one per line; with as_trees
 * nonzero, prints the full bracketed derivations instead. */
TLM_API tlm_status tlm_sample(const tlm_model* model, int count, int max_words, uint64_t seed,
                              int as_trees, const char* out_path);

/* Labeled bracketing precision/recall/F1 between two tree files (percent).
 * per_sentence_tsv is optional. */
TLM_API tlm_status tlm_score_trees(const char* gold_path, const char* pred_path,
                                   const char* per_sentence_tsv, double* precision,
                                   double* recall, double* f1);

#ifdef __cplusplus
}
#endif

#endif /* TREELM_H */
