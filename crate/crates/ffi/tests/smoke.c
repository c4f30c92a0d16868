#include <math.h>
#include <stdio.h>
#include <string.h>

#include "riskq.h"

#define CHECK(cond)                                                     \
    do {                                                                \
        if (!(cond)) {                                                  \
            fprintf(stderr, "line %d: %s (%s)\n", __LINE__, #cond,       \
                    riskq_last_error());                                \
            return 1;                                                   \
        }                                                               \
    } while (0)

int main(void) {
    RiskqConfig *cfg = NULL;
    CHECK(riskq_config_preset("gridworld", &cfg) == RISKQ_STATUS_OK);

    char hash[17];
    CHECK(riskq_config_hash(cfg, hash, sizeof hash) == RISKQ_STATUS_OK);
    CHECK(strlen(hash) == 16);
    CHECK(riskq_config_hash(cfg, hash, 8) == RISKQ_STATUS_BUFFER_TOO_SMALL);

    RiskqExact *exact = NULL;
    CHECK(riskq_exact_solve(cfg, RISKQ_OBJECTIVE_MIN_RISK, &exact) == RISKQ_STATUS_OK);
    double value, risk;
    CHECK(riskq_exact_aggregate(exact, &value, &risk) == RISKQ_STATUS_OK);
    CHECK(fabs(value - 0.621) < 0.001);

    size_t n = riskq_exact_num_states(exact);
    size_t x, y, action;
    CHECK(riskq_exact_state(exact, n - 1, &x, &y, &action, &value, &risk) == RISKQ_STATUS_OUT_OF_RANGE);
    CHECK(riskq_exact_state(exact, 0, &x, &y, &action, &value, &risk) == RISKQ_STATUS_OK);
    CHECK(action < 4);

    RiskqConfig *bad = NULL;
    CHECK(riskq_config_from_toml("[learning]\ngamma = 3.0\n", "gridworld", &bad) == RISKQ_STATUS_CONFIG);
    CHECK(bad == NULL);
    CHECK(strstr(riskq_last_error(), "learning.gamma") != NULL);

    riskq_exact_free(exact);
    riskq_config_free(cfg);
    printf("riskq %s ok\n", riskq_version());
    return 0;
}
