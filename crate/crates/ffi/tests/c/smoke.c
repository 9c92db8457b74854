#include <stdio.h>
#include "neurostereo.h"

/* One left/right pair on row 0 at disparity 2, repeated every 20 ms. */
int main(void) {
    NsEvent events[40];
    for (int k = 0; k < 20; k++) {
        events[2 * k] = (NsEvent){ (uint64_t)k * 20000, 1, 0, 1, 0 };
        events[2 * k + 1] = (NsEvent){ (uint64_t)k * 20000 + 100, 3, 0, 1, 1 };
    }
    NsStream *stream = NULL;
    NsTopology *topo = NULL;
    NsRecord *record = NULL;
    if (ns_stream_from_events(events, 40, 4, 1, &stream) != NS_STATUS_OK) return 1;
    if (ns_topology_build(4, 1, 3, &topo) != NS_STATUS_OK) return 2;
    if (ns_simulate(topo, stream, NULL, &record) != NS_STATUS_OK) return 3;
    uint64_t c = ns_record_count(record, NS_POPULATION_COINCIDENCE_EXC);
    NsSpike first;
    if (ns_record_spike(record, 0, &first) != NS_STATUS_OK) return 4;
    NsNeuronInfo info;
    if (ns_topology_coord(topo, first.neuron, &info) != NS_STATUS_OK) return 5;
    printf("spikes=%zu coincidence=%llu first_d=%d\n", ns_record_len(record), (unsigned long long)c, info.d);
    if (ns_topology_build(2, 2, 5, NULL) != NS_STATUS_NULL_POINTER) return 6;
    if (ns_last_error_message() == NULL) return 7;
    ns_record_free(record);
    ns_topology_free(topo);
    ns_stream_free(stream);
    return c == 20 && info.d == 2 ? 0 : 8;
}
