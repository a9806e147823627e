#ifndef POD4D_POD4D_H
#define POD4D_POD4D_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define POD4D_EXPORT __declspec(dllexport)
#else
#define POD4D_EXPORT __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pod4d_status {
  POD4D_OK = 0,
  POD4D_ERR_INVALID_ARGUMENT = 1,
  POD4D_ERR_IO = 2,
  POD4D_ERR_PARSE = 3,
  POD4D_ERR_SHAPE_MISMATCH = 4,
  POD4D_ERR_CONFIG = 5,
  POD4D_ERR_PLACEMENT = 6,
  POD4D_ERR_INTERNAL = 99
} pod4d_status;

typedef struct pod4d_config pod4d_config;
typedef struct pod4d_frame pod4d_frame;
typedef struct pod4d_two_frame pod4d_two_frame;

POD4D_EXPORT const char* pod4d_version(void);
POD4D_EXPORT const char* pod4d_status_name(pod4d_status status);
/* Message of the last failure on the calling thread; empty after success. */
POD4D_EXPORT const char* pod4d_last_error(void);

POD4D_EXPORT pod4d_status pod4d_config_default(pod4d_config** out);
POD4D_EXPORT pod4d_status pod4d_config_load(const char* path, pod4d_config** out);
/* Overlays a JSON object with the same schema as the config file. */
POD4D_EXPORT pod4d_status pod4d_config_merge_json(pod4d_config* cfg, const char* json_text);
POD4D_EXPORT pod4d_status pod4d_config_set_pipeline(pod4d_config* cfg, const char* pipeline);
POD4D_EXPORT pod4d_status pod4d_config_set_horizon(pod4d_config* cfg, double seconds);
POD4D_EXPORT pod4d_status pod4d_config_set_seed(pod4d_config* cfg, uint64_t seed);
POD4D_EXPORT pod4d_status pod4d_config_set_workers(pod4d_config* cfg, int workers);
/* Writes the effective configuration as JSON. *needed receives the size including the terminator. */
POD4D_EXPORT pod4d_status pod4d_config_to_json(const pod4d_config* cfg, char* buffer, size_t capacity, size_t* needed);
POD4D_EXPORT void pod4d_config_free(pod4d_config* cfg);

POD4D_EXPORT pod4d_status pod4d_simulate(const pod4d_config* cfg, const char* out_dir);
POD4D_EXPORT pod4d_status pod4d_run(const pod4d_config* cfg, const char* dataset_dir, const char* out_dir,
                                    size_t* failed_frames);
/* task: "standard" or "predictive". mean_ap may be NULL; it receives -1 when undefined. */
POD4D_EXPORT pod4d_status pod4d_eval(const pod4d_config* cfg, const char* det_dir, const char* dataset_dir,
                                     const char* task, const char* out_dir, double* mean_ap);
POD4D_EXPORT pod4d_status pod4d_bench(const pod4d_config* cfg, const char* out_dir);
/* Any path except out_image may be NULL. horizon <= 0 draws current ground truth only. */
POD4D_EXPORT pod4d_status pod4d_render(const pod4d_config* cfg, const char* frame_bin, const char* boxes_jsonl,
                                       const char* gt_jsonl, const char* out_image, double horizon);

POD4D_EXPORT pod4d_status pod4d_frame_load(const char* bin_path, pod4d_frame** out);
POD4D_EXPORT size_t pod4d_frame_num_points(const pod4d_frame* frame);
/* Copies N x 5 floats (x, y, z, intensity, radial velocity). */
POD4D_EXPORT pod4d_status pod4d_frame_points(const pod4d_frame* frame, float* out, size_t capacity);
POD4D_EXPORT void pod4d_frame_free(pod4d_frame* frame);

/* Ground extraction, velocity compensation and virtual future points at the configured horizon. */
POD4D_EXPORT pod4d_status pod4d_preprocess(const pod4d_config* cfg, const pod4d_frame* frame, pod4d_two_frame** out);
POD4D_EXPORT size_t pod4d_two_frame_num_records(const pod4d_two_frame* tf);
/* Copies N x 7 floats (x, y, z, intensity, v_abs, t_label, 0). */
POD4D_EXPORT pod4d_status pod4d_two_frame_records(const pod4d_two_frame* tf, float* out, size_t capacity);
POD4D_EXPORT void pod4d_two_frame_free(pod4d_two_frame* tf);

/* Boxes as {x, y, z, l, w, h, yaw}. */
POD4D_EXPORT pod4d_status pod4d_iou_3d(const double a[7], const double b[7], double* out);

#ifdef __cplusplus
}
#endif

#endif
