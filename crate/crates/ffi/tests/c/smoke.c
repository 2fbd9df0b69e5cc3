/* Exercises the C header end to end: fixture in, JSON out. */
#include <stdio.h>
#include <string.h>

#include "neuroexplain.h"

#define CHECK(call)                                                           \
    do {                                                                      \
        NxStatus s_ = (call);                                                 \
        if (s_ != NX_STATUS_OK) {                                             \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_,                 \
                    nx_last_error_message());                                 \
            return 1;                                                         \
        }                                                                     \
    } while (0)

int main(int argc, char **argv) {
    if (argc != 5) {
        fprintf(stderr, "usage: smoke HEATMAP GT_MASK ATLAS LABELS\n");
        return 2;
    }
    NxHeatmap *heat = NULL;
    NxMask *gt = NULL, *mask = NULL;
    NxAtlas *atlas = NULL;
    char *seg = NULL, *coverage = NULL;

    CHECK(nx_heatmap_read_npy(argv[1], &heat));
    CHECK(nx_mask_read_png(argv[2], &gt));
    CHECK(nx_atlas_read(argv[3], argv[4], &atlas));

    NxSegmentationParams params = nx_segmentation_params_default();
    CHECK(nx_segment(heat, gt, &params, &mask, &seg));
    CHECK(nx_map_atlas(mask, atlas, -1, &coverage));
    printf("%s\n%s\n", seg, coverage);

    if (nx_mask_read_png("/nonexistent.png", &gt) != NX_STATUS_IO ||
        strstr(nx_last_error_message(), "nonexistent") == NULL) {
        fprintf(stderr, "missing file not reported\n");
        return 1;
    }

    nx_string_free(seg);
    nx_string_free(coverage);
    nx_mask_free(mask);
    nx_mask_free(gt);
    nx_heatmap_free(heat);
    nx_atlas_free(atlas);
    return 0;
}
