#include <math.h>
#include <stdio.h>
#include "tcm_cannon.h"

#define CHECK(cond)                                                  \
    do {                                                             \
        if (!(cond)) {                                               \
            const char *msg = tcm_last_error();                      \
            fprintf(stderr, "line %d: %s (%s)\n", __LINE__, #cond,   \
                    msg ? msg : "no error message");                 \
            return 1;                                                \
        }                                                            \
    } while (0)

int main(void) {
    double g[2] = {0.1, 0.1};
    TcmModel *model = NULL;
    CHECK(tcm_model_new(2, 1.0, 1.0, g, 2, TCM_PHOTON_FACTORS_BOSONIC, &model) == TCM_STATUS_OK);
    CHECK(tcm_model_dimension(model) == 4);

    TcmMatrix *h = NULL;
    CHECK(tcm_hamiltonian(model, &h) == TCM_STATUS_OK);
    double re, im;
    CHECK(tcm_matrix_get(h, 0, 1, &re, &im) == TCM_STATUS_OK);
    CHECK(fabs(re - 0.1 * sqrt(2.0)) < 1e-15 && im == 0.0);
    CHECK(tcm_matrix_get(h, 4, 0, &re, &im) == TCM_STATUS_OUT_OF_RANGE);
    CHECK(tcm_last_error() != NULL);

    TcmMatrix *hh = NULL, *hh_serial = NULL;
    CHECK(tcm_cannon_multiply(h, h, 2, &hh) == TCM_STATUS_OK);
    CHECK(tcm_cannon_multiply(h, h, 0, &hh_serial) == TCM_STATUS_OK);
    double a[16], b[16], ai[16], bi[16];
    CHECK(tcm_matrix_copy_parts(hh, a, ai, 16) == TCM_STATUS_OK);
    CHECK(tcm_matrix_copy_parts(hh_serial, b, bi, 16) == TCM_STATUS_OK);
    for (int k = 0; k < 16; k++) CHECK(fabs(a[k] - b[k]) < 1e-15 && fabs(ai[k] - bi[k]) < 1e-15);

    TcmEvolutionConfig cfg = tcm_evolution_config_default();
    cfg.steps = 20;
    cfg.grid_side = 2;
    TcmTrajectory *traj = NULL;
    CHECK(tcm_simulate(model, &cfg, &traj) == TCM_STATUS_OK);
    CHECK(tcm_trajectory_len(traj) == 21);
    CHECK(tcm_trajectory_sectors(traj) == 3);
    double p0, tr;
    CHECK(tcm_trajectory_probability(traj, 0, 0, &p0) == TCM_STATUS_OK && p0 == 1.0);
    CHECK(tcm_trajectory_trace(traj, 20, &tr) == TCM_STATUS_OK && fabs(tr - 1.0) < 1e-10);

    TcmModel *bad = NULL;
    CHECK(tcm_model_new(3, 1.0, 1.0, g, 2, TCM_PHOTON_FACTORS_UNIT, &bad) == TCM_STATUS_INVALID_ARGUMENT);
    CHECK(bad == NULL);

    tcm_trajectory_free(traj);
    tcm_matrix_free(hh_serial);
    tcm_matrix_free(hh);
    tcm_matrix_free(h);
    tcm_model_free(model);
    printf("ok %s\n", tcm_version());
    return 0;
}
