#include <stdio.h>
#include <string.h>
#include "transduce.h"

#define CHECK(cond) do { if (!(cond)) { fprintf(stderr, "failed: %s\n", #cond); return 1; } } while (0)

int main(void) {
    TransduceConfig *cfg = NULL;
    char msg[256];

    CHECK(strlen(transduce_version()) > 0);
    CHECK(transduce_config_preset("nope", &cfg) == TRANSDUCE_STATUS_INVALID_CONFIG);
    CHECK(transduce_last_error(msg, sizeof msg) > 0);
    CHECK(transduce_config_preset("fig2a", NULL) == TRANSDUCE_STATUS_NULL_POINTER);

    CHECK(transduce_config_preset("fig2a", &cfg) == TRANSDUCE_STATUS_OK);
    TransduceEfficiency e;
    CHECK(transduce_efficiency(cfg, &e) == TRANSDUCE_STATUS_OK);
    CHECK(e.eta > 0.9 && e.eta < 0.93);
    TransduceNoiseBudget nb;
    CHECK(transduce_noise_budget(cfg, &nb) == TRANSDUCE_STATUS_OK);
    CHECK(nb.mean_occupation > 160.0 && nb.mean_occupation < 180.0);
    CHECK(transduce_config_set(cfg, "ensemble.nonexistent", 1.0) != TRANSDUCE_STATUS_OK);
    transduce_config_free(cfg);
    printf("c smoke ok: eta = %.4f\n", e.eta);
    return 0;
}
