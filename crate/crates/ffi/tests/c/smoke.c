#include <stdio.h>
#include <string.h>
#include "msth.h"

int main(void) {
    double a[4] = {5.0, 0.1, 0.1, 0.1};
    bool fired = false;
    if (msth_detect_emergency(a, 4, 100, 0, &fired) != MSTH_STATUS_OK || !fired) return 1;

    MsthConfig *cfg = NULL;
    if (msth_config_new(&cfg) != MSTH_STATUS_OK) return 2;
    if (msth_config_set(cfg, "dataset.n", "60") != MSTH_STATUS_OK) return 3;
    if (msth_config_set(cfg, "train.epochs", "1") != MSTH_STATUS_OK) return 3;
    if (msth_config_set(cfg, "no.such.key", "1") != MSTH_STATUS_CONFIG) return 4;
    if (msth_last_error() == NULL) return 5;

    char *json = NULL;
    if (msth_run(cfg, 0, &json) != MSTH_STATUS_OK) return 6;
    int ok = strstr(json, "\"config_hash\"") != NULL;
    msth_string_free(json);
    msth_config_free(cfg);
    printf("msth %s ok\n", msth_version());
    return ok ? 0 : 7;
}
