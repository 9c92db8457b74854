#ifndef NEUROSTEREO_H
#define NEUROSTEREO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NsPopulation {
  NS_POPULATION_RETINA_LEFT = 0,
  NS_POPULATION_RETINA_RIGHT = 1,
  NS_POPULATION_COINCIDENCE_EXC = 2,
  NS_POPULATION_COINCIDENCE_INH = 3,
  NS_POPULATION_DISPARITY = 4,
} NsPopulation;

/**
 * Result of every fallible call.
 */
typedef enum NsStatus {
  NS_STATUS_OK = 0,
  NS_STATUS_NULL_POINTER = 1,
  NS_STATUS_INVALID_ARGUMENT = 2,
  NS_STATUS_IO = 3,
  NS_STATUS_OUT_OF_RANGE = 4,
  NS_STATUS_SIMULATION = 5,
  NS_STATUS_PIPELINE = 6,
  NS_STATUS_PANIC = 7,
} NsStatus;

/**
 * Opaque simulation result.
 */
typedef struct NsRecord NsRecord;

/**
 * Opaque stereo event stream.
 */
typedef struct NsStream NsStream;

/**
 * Opaque network.
 */
typedef struct NsTopology NsTopology;

/**
 * One input event. `polarity` is 0 (off) or 1 (on); `side` is 0 (left) or 1 (right).
 */
typedef struct NsEvent {
  uint64_t t_us;
  uint32_t x;
  uint32_t y;
  uint8_t polarity;
  uint8_t side;
} NsEvent;

/**
 * Location of a neuron. Retina neurons fill `x`, `y` and `channel`;
 * coincidence and disparity neurons fill `x_cyc`, `y` and `d`.
 */
typedef struct NsNeuronInfo {
  enum NsPopulation population;
  int32_t x;
  int32_t y;
  uint8_t channel;
  int32_t x_cyc;
  int32_t d;
} NsNeuronInfo;

/**
 * Membrane parameters shared by all non-retina neurons.
 */
typedef struct NsNeuronParams {
  double tau_m_us;
  double tau_s_us;
  double threshold;
  double reset;
  uint64_t refractory_us;
} NsNeuronParams;

/**
 * One output spike.
 */
typedef struct NsSpike {
  uint64_t t_us;
  uint32_t neuron;
  enum NsPopulation population;
} NsSpike;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null if none failed.
 *
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *ns_last_error_message(void);

/**
 * Reads an event CSV (`t_us,x,y,p[,side]`). Files without a side column are
 * read as left-camera events.
 *
 * # Safety
 *
 * - `path` must be a valid NUL-terminated string.
 * - `out` must be a valid pointer to writable storage for one handle.
 */
enum NsStatus ns_stream_read_csv(const char *path,
                                 uint32_t width,
                                 uint32_t height,
                                 struct NsStream **out);

/**
 * Builds a stream from an array of events in any order.
 *
 * # Safety
 *
 * - `events` must point to `len` initialized `NsEvent` values, or be null when `len` is 0.
 * - `out` must be a valid pointer to writable storage for one handle.
 */
enum NsStatus ns_stream_from_events(const struct NsEvent *events,
                                    size_t len,
                                    uint32_t width,
                                    uint32_t height,
                                    struct NsStream **out);

/**
 * Number of events in `stream`, 0 if it is null.
 *
 * # Safety
 *
 * `stream` must be null or a live handle from `ns_stream_read_csv` or `ns_stream_from_events`.
 */
size_t ns_stream_len(const struct NsStream *stream);

/**
 * # Safety
 *
 * `stream` must be null or a live stream handle; it is invalid afterwards.
 */
void ns_stream_free(struct NsStream *stream);

/**
 * Builds the network for a `width × height` retina and disparities
 * `-d_max..=d_max`, with default weights.
 *
 * # Safety
 *
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum NsStatus ns_topology_build(uint32_t width,
                                uint32_t height,
                                uint32_t d_max,
                                struct NsTopology **out);

/**
 * Total number of neurons, 0 if `topology` is null.
 *
 * # Safety
 *
 * `topology` must be null or a live handle from `ns_topology_build`.
 */
uint32_t ns_topology_neuron_count(const struct NsTopology *topology);

/**
 * Looks up the location of neuron `id`.
 *
 * # Safety
 *
 * - `topology` must be a live handle from `ns_topology_build`.
 * - `out` must be a valid pointer to writable storage for one `NsNeuronInfo`.
 */
enum NsStatus ns_topology_coord(const struct NsTopology *topology,
                                uint32_t id,
                                struct NsNeuronInfo *out);

/**
 * # Safety
 *
 * `topology` must be null or a live topology handle; it is invalid afterwards.
 */
void ns_topology_free(struct NsTopology *topology);

/**
 * Writes the default neuron parameters into `out`.
 *
 * # Safety
 *
 * `out` must be a valid pointer to writable storage for one `NsNeuronParams`.
 */
enum NsStatus ns_params_default(struct NsNeuronParams *out);

/**
 * Runs the network on `stream`. `params` may be null for defaults.
 *
 * # Safety
 *
 * - `topology` and `stream` must be live handles.
 * - `params` must be null or point to an initialized `NsNeuronParams`.
 * - `out` must be a valid pointer to writable storage for one handle.
 */
enum NsStatus ns_simulate(const struct NsTopology *topology,
                          const struct NsStream *stream,
                          const struct NsNeuronParams *params,
                          struct NsRecord **out);

/**
 * Number of spikes in `record`, 0 if it is null.
 *
 * # Safety
 *
 * `record` must be null or a live handle from `ns_simulate`.
 */
size_t ns_record_len(const struct NsRecord *record);

/**
 * Number of spikes emitted by one population, 0 if `record` is null.
 *
 * # Safety
 *
 * `record` must be null or a live handle from `ns_simulate`.
 */
uint64_t ns_record_count(const struct NsRecord *record, enum NsPopulation population);

/**
 * Copies spike `index` (in time order) into `out`.
 *
 * # Safety
 *
 * - `record` must be a live handle from `ns_simulate`.
 * - `out` must be a valid pointer to writable storage for one `NsSpike`.
 */
enum NsStatus ns_record_spike(const struct NsRecord *record, size_t index, struct NsSpike *out);

/**
 * # Safety
 *
 * `record` must be null or a live record handle; it is invalid afterwards.
 */
void ns_record_free(struct NsRecord *record);

/**
 * Runs a JSON run config end to end and writes its artifacts. On success,
 * if `report_json` is not null it receives the report as a string that must
 * be released with `ns_string_free`.
 *
 * # Safety
 *
 * - `config_path` must be a valid NUL-terminated string.
 * - `report_json` must be null or a valid pointer to writable storage for one pointer.
 */
enum NsStatus ns_run_config(const char *config_path, char **report_json);

/**
 * # Safety
 *
 * `s` must be null or a string returned by this library; it is invalid afterwards.
 */
void ns_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NEUROSTEREO_H */
