#ifndef BLINDTRACK_H
#define BLINDTRACK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BtEventKind {
  BT_EVENT_KIND_MOVE = 0,
  BT_EVENT_KIND_DOWN = 1,
  BT_EVENT_KIND_UP = 2,
  BT_EVENT_KIND_KEY = 3,
  BT_EVENT_KIND_TOUCH_DOWN = 4,
  BT_EVENT_KIND_TOUCH_MOVE = 5,
  BT_EVENT_KIND_TOUCH_UP = 6,
  BT_EVENT_KIND_BOOT = 7,
} BtEventKind;

/**
 * Named keys; `Char` means the key is `BtEvent::codepoint`.
 */
typedef enum BtKey {
  BT_KEY_CHAR = 0,
  BT_KEY_BACKSPACE,
  BT_KEY_DELETE,
  BT_KEY_ENTER,
  BT_KEY_TAB,
  BT_KEY_ESCAPE,
  BT_KEY_LEFT,
  BT_KEY_RIGHT,
  BT_KEY_UP,
  BT_KEY_DOWN,
  BT_KEY_HOME,
  BT_KEY_END,
  BT_KEY_SELECT_ALL,
} BtKey;

typedef enum BtStatus {
  BT_STATUS_OK = 0,
  BT_STATUS_NULL_ARGUMENT = 1,
  BT_STATUS_INVALID_UTF8 = 2,
  /**
   * Malformed model, config, spec or event text.
   */
  BT_STATUS_PARSE = 3,
  /**
   * Well-formed input the model or estimator rejects.
   */
  BT_STATUS_INVALID = 4,
  BT_STATUS_IO = 5,
  BT_STATUS_BUFFER_TOO_SMALL = 6,
  BT_STATUS_PANIC = 7,
} BtStatus;

typedef struct BtEstimator BtEstimator;

typedef struct BtModel BtModel;

typedef struct BtSession BtSession;

/**
 * One input event. `x`/`y` are the delta for `Move` and the absolute
 * position for touch events; unused fields are ignored.
 */
typedef struct BtEvent {
  uint64_t t_ms;
  enum BtEventKind kind;
  int32_t x;
  int32_t y;
  enum BtKey key;
  uint32_t codepoint;
} BtEvent;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message.
 */
enum BtStatus bt_last_error(char *buf, size_t cap, size_t *needed);

/**
 * The bundled pacemaker model.
 */
enum BtStatus bt_model_pacemaker(struct BtModel **out);

/**
 * Parses and validates model text.
 */
enum BtStatus bt_model_parse(const char *text, struct BtModel **out);

enum BtStatus bt_model_load_file(const char *path, struct BtModel **out);

enum BtStatus bt_model_state_count(const struct BtModel *model, size_t *out);

/**
 * Id of state `index`.
 */
enum BtStatus bt_model_state_id(const struct BtModel *model,
                                size_t index,
                                char *buf,
                                size_t cap,
                                size_t *needed);

void bt_model_free(struct BtModel *model);

/**
 * New estimator. With `known_start` it begins in the model's start state
 * with the cursor anywhere; otherwise every state is equally likely.
 * `config_json` may be null for the defaults.
 */
enum BtStatus bt_estimator_new(const struct BtModel *model,
                               bool known_start,
                               const char *config_json,
                               struct BtEstimator **out);

/**
 * Feeds one event. On a tracker-limit overflow the estimator collapses
 * to a coarser belief and the call still succeeds.
 */
enum BtStatus bt_estimator_observe(struct BtEstimator *est, const struct BtEvent *event);

/**
 * Most likely state, its probability and the area (pixels) of its
 * combined uncertainty region. Any out pointer may be null.
 */
enum BtStatus bt_estimator_estimate(const struct BtEstimator *est,
                                    size_t *top_state,
                                    double *top_prob,
                                    uint64_t *region_area,
                                    size_t *tracker_count);

enum BtStatus bt_estimator_state_prob(const struct BtEstimator *est, size_t state, double *out);

/**
 * Whether an attack on `state_id` could launch now.
 */
enum BtStatus bt_estimator_attack_ready(const struct BtEstimator *est,
                                        const char *state_id,
                                        bool *out);

/**
 * Full tracker set as JSON.
 */
enum BtStatus bt_estimator_snapshot_json(const struct BtEstimator *est,
                                         char *buf,
                                         size_t cap,
                                         size_t *needed);

void bt_estimator_free(struct BtEstimator *est);

/**
 * New interposer session. `spec_json` is an attack spec object as in the
 * service `open` message; `config_json` may be null.
 */
enum BtStatus bt_session_new(const struct BtModel *model,
                             const char *spec_json,
                             const char *config_json,
                             struct BtSession **out);

/**
 * Feeds one user event. The events to deliver are queued; `pending`
 * (may be null) receives the queue length. Read them with
 * [`bt_session_drain`].
 */
enum BtStatus bt_session_interpose(struct BtSession *session,
                                   const struct BtEvent *event,
                                   size_t *pending);

/**
 * Flushes held events at end of input.
 */
enum BtStatus bt_session_finish(struct BtSession *session, size_t *pending);

/**
 * Moves up to `cap` queued events into `out`, oldest first.
 */
enum BtStatus bt_session_drain(struct BtSession *session,
                               struct BtEvent *out,
                               size_t cap,
                               size_t *written);

enum BtStatus bt_session_launched(const struct BtSession *session, bool *out);

/**
 * Decision log so far, one line per decision.
 */
enum BtStatus bt_session_log(const struct BtSession *session,
                             char *buf,
                             size_t cap,
                             size_t *needed);

void bt_session_free(struct BtSession *session);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* BLINDTRACK_H */
