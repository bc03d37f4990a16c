#include <stdio.h>
#include "multilrsga.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        MlStatus s_ = (call);                                              \
        if (s_ != ML_STATUS_OK) {                                          \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_,             \
                    ml_last_error_message());                              \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    MlGame *game = NULL;
    CHECK(ml_game_builtin("paper3", 0.0, &game));
    size_t d = 0;
    CHECK(ml_game_dim(game, &d));

    MlSolverConfig cfg = ml_solver_config_default(ML_SOLVER_KIND_MULTI_LRSGA);
    cfg.secant_seed = 42;
    MlTrace *trace = NULL;
    CHECK(ml_solve(game, ML_SOLVER_KIND_MULTI_LRSGA, &cfg, NULL, 0, &trace));

    MlTraceStatus status;
    size_t iters = 0;
    double w[4];
    CHECK(ml_trace_status(trace, &status));
    CHECK(ml_trace_iterations(trace, &iters));
    CHECK(ml_trace_final_point(trace, w, d));

    MlFrozenMap fm;
    CHECK(ml_frozen_map(game, 0.001, 1.0, &fm));

    MlGame *bad = NULL;
    if (ml_game_builtin("nope", 0.0, &bad) != ML_STATUS_UNKNOWN_GAME) return 1;

    printf("d=%zu status=%d iterations=%zu contractive=%d\n", d, (int)status, iters, (int)fm.contractive);
    ml_trace_free(trace);
    ml_game_free(game);
    return status == ML_TRACE_STATUS_CONVERGED && fm.contractive ? 0 : 1;
}
