#include <stdio.h>

#include "arl.h"

int main(void) {
    ArlDataset *ds = NULL;
    ArlAgent *agent = NULL;
    if (arl_dataset_generate("pointmaze15", "stitch", 20, 20, 0.1, 0, &ds) != ARL_OK ||
        arl_agent_train(ds, "arli", "desk", 20, 0, &agent) != ARL_OK) {
        fprintf(stderr, "arl: %s\n", arl_last_error());
        return 1;
    }
    double s[2] = {1.5, 1.5}, g[2] = {5.5, 1.5}, a[2];
    arl_agent_act(agent, s, g, 2, true, 0, a, 2);
    printf("arl %s: %zu transitions, action (%.3f, %.3f)\n", arl_version(), arl_dataset_num_transitions(ds), a[0], a[1]);
    arl_agent_free(agent);
    arl_dataset_free(ds);
    return 0;
}
