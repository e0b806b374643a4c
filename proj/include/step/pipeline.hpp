#pragma once

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "step/config.hpp"
#include "step/io.hpp"
#include "step/linking.hpp"
#include "step/metrics.hpp"
#include "step/training.hpp"

namespace step {

namespace detail {

/// Index-parallel loop with deterministic output slots; rethrows the first
/// worker exception.
template <typename Fn>
void parallel_for(int n, int jobs, Fn&& fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  for (int t = 0; t < jobs; ++t)
    workers.emplace_back([&] {
      for (int i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  for (auto& w : workers) w.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

/// Deterministic dataset realization: one scene per video, seeds derived
/// from the experiment seed.
inline std::vector<VideoScene> simulate_dataset(const ExperimentConfig& cfg) {
  std::vector<VideoScene> out(static_cast<std::size_t>(cfg.num_videos));
  for (int v = 0; v < cfg.num_videos; ++v) {
    char name[32];
    std::snprintf(name, sizeof(name), "video_%04d", v);
    out[static_cast<std::size_t>(v)] = {name, generate_scene(video_scene_spec(cfg, v))};
  }
  return out;
}

/// Full K-frame clip windows tiling a video.
inline std::vector<FrameInterval> tile_clips(int num_frames, int clip_length) {
  std::vector<FrameInterval> out;
  for (int c = 0; (c + 1) * clip_length <= num_frames; ++c)
    out.push_back({static_cast<std::int64_t>(c) * clip_length,
                   static_cast<std::int64_t>(c + 1) * clip_length});
  return out;
}

/// Validate checkpoint heads against the config-derived shapes.
inline void check_heads(const ExperimentConfig& cfg, const std::vector<LinearHead>& heads) {
  if (static_cast<int>(heads.size()) != cfg.step.num_steps)
    throw ConfigError("checkpoint: head count does not match step count");
  for (int s = 1; s <= cfg.step.num_steps; ++s) {
    const LinearHead& h = heads[static_cast<std::size_t>(s - 1)];
    const int frames = cfg.step.length_at_step(s);
    if (h.num_frames != frames || h.num_classes != cfg.scene.num_classes ||
        h.feature_dim != feature_dim(frames, cfg.scene.num_classes))
      throw ConfigError("checkpoint: head shape does not match config at step " +
                        std::to_string(s));
    if (cfg.step.emits_anticipation_at(s) && h.anticipation_frames != cfg.step.clip_length)
      throw ConfigError("checkpoint: step " + std::to_string(s) +
                        " needs anticipation regressors for this extension mode");
  }
}

/**
 * @brief Run progressive detection over every clip of every video.
 *
 * Emits one record per (clip, proposal, step): step 0 holds the initial
 * cuboids under a uniform distribution, steps 1..S the refined outputs.
 * Per-clip rng streams are derived from (seed, video, clip), so results do
 * not depend on the job count.
 */
inline std::vector<DetectionRecord> run_detection(const ExperimentConfig& cfg,
                                                  const std::vector<VideoScene>& scenes,
                                                  const std::vector<LinearHead>* heads,
                                                  int jobs = 1) {
  if (cfg.model.kind == ModelKind::linear) {
    if (!heads) throw ConfigError("linear model needs a checkpoint");
    check_heads(cfg, *heads);
  }
  const int C = cfg.scene.num_classes;
  const int K = cfg.step.clip_length;
  std::vector<std::vector<DetectionRecord>> per_video(scenes.size());

  detail::parallel_for(static_cast<int>(scenes.size()), jobs, [&](int v) {
    const VideoScene& vs = scenes[static_cast<std::size_t>(v)];
    auto scene = std::make_shared<const Scene>(vs.scene);
    const std::vector<Box> boxes = cfg.proposals.generate(scene->spec.frame);

    OracleModel oracle(scene->tubes, C, scene->spec.frame, cfg.model.noise, cfg.model.sharpness,
                       cfg.step.extension_mode == ExtensionMode::anticipate ? K : 0);
    std::vector<LinearModel> linear;
    if (cfg.model.kind == ModelKind::linear)
      for (const LinearHead& h : *heads)
        linear.emplace_back(&h, make_feature_fn(scene, cfg.model.feature_noise));
    std::vector<const RefinementModel*> models;
    for (int s = 0; s < cfg.step.num_steps; ++s)
      models.push_back(cfg.model.kind == ModelKind::oracle
                           ? static_cast<const RefinementModel*>(&oracle)
                           : &linear[static_cast<std::size_t>(s)]);

    std::vector<DetectionRecord>& records = per_video[static_cast<std::size_t>(v)];
    const auto clips = tile_clips(scene->spec.num_frames, K);
    for (std::size_t c = 0; c < clips.size(); ++c) {
      ClipContext ctx{clips[c], {0, scene->spec.num_frames}, scene->spec.frame};
      const auto initial = replicate_to_cuboids(boxes, ctx.clip);
      std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(v), c));
      const ClipDetections trace = detect_clip(ctx, initial, cfg.step, models, rng);

      const std::vector<double> uniform(static_cast<std::size_t>(C) + 1, 1.0 / (C + 1));
      for (std::size_t i = 0; i < initial.size(); ++i)
        records.push_back({vs.name, static_cast<int>(c), static_cast<int>(i), 0, uniform,
                           initial[i]});
      for (int s = 1; s <= cfg.step.num_steps; ++s) {
        const StepRecord& rec = trace.steps[static_cast<std::size_t>(s - 1)];
        for (std::size_t i = 0; i < rec.updated.size(); ++i)
          records.push_back({vs.name, static_cast<int>(c), static_cast<int>(i), s,
                             rec.outputs[i].detection.probs, rec.updated[i]});
      }
    }
  });

  std::vector<DetectionRecord> out;
  for (auto& v : per_video) out.insert(out.end(), v.begin(), v.end());
  return out;
}

struct TrainingOutput {
  std::vector<LinearHead> heads;
  CsvTable log;
};

/**
 * @brief Joint multi-step training of linear heads on the simulated dataset.
 *
 * Clips rotate through fixed-size batches; one gradient update per
 * iteration; the log carries per-step loss breakdowns.
 */
inline TrainingOutput run_training(const ExperimentConfig& cfg,
                                   const std::vector<VideoScene>& scenes) {
  std::vector<TrainClip> clips;
  for (const VideoScene& vs : scenes) {
    auto scene = std::make_shared<const Scene>(vs.scene);
    const std::vector<Box> boxes = cfg.proposals.generate(scene->spec.frame);
    for (const FrameInterval& clip : tile_clips(scene->spec.num_frames, cfg.step.clip_length)) {
      TrainClip tc;
      tc.ctx = {clip, {0, scene->spec.num_frames}, scene->spec.frame};
      tc.scene = scene;
      tc.initial = replicate_to_cuboids(boxes, clip);
      clips.push_back(std::move(tc));
    }
  }
  if (clips.empty()) throw ConfigError("training: no full clips in the dataset");

  TrainingOutput out;
  std::mt19937_64 head_rng(mix_seed(cfg.seed, 0x7261696eULL));
  out.heads = make_heads(cfg.step, cfg.scene.num_classes, head_rng);

  out.log.header = {"iteration"};
  for (int s = 1; s <= cfg.step.num_steps; ++s) {
    const std::string p = "step" + std::to_string(s) + "_";
    out.log.header.push_back(p + "cls");
    out.log.header.push_back(p + "loc");
    out.log.header.push_back(p + "anticipation");
  }
  out.log.header.push_back("total");

  std::mt19937_64 rng(mix_seed(cfg.seed, 0x6261746368ULL));
  const int B = std::max(1, cfg.model.batch_clips);
  for (int iter = 0; iter < cfg.model.iterations; ++iter) {
    std::vector<TrainClip> batch;
    for (int j = 0; j < B; ++j)
      batch.push_back(clips[static_cast<std::size_t>((iter * B + j) % clips.size())]);
    const TrainReport report = joint_train_pass(batch, cfg.step, out.heads,
                                                cfg.model.feature_noise,
                                                cfg.model.learning_rate, rng);
    std::vector<std::string> row{std::to_string(iter)};
    for (const LossBreakdown& b : report.per_step) {
      row.push_back(format_double(b.cls));
      row.push_back(format_double(b.loc));
      row.push_back(format_double(b.anticipation));
    }
    row.push_back(format_double(report.total.total()));
    out.log.rows.push_back(std::move(row));
  }
  return out;
}

/**
 * @brief Link final-step detections into per-class action tubes and trim
 * them. Tubes whose trim labels every clip out are dropped.
 */
inline std::vector<TubeRecord> run_linking(const ExperimentConfig& cfg,
                                           const std::vector<DetectionRecord>& records) {
  const int C = cfg.scene.num_classes;
  const int K = cfg.step.clip_length;
  std::vector<std::string> video_order;
  std::map<std::string, std::vector<const DetectionRecord*>> by_video;
  for (const DetectionRecord& r : records) {
    if (r.step != cfg.step.num_steps) continue;
    if (!by_video.count(r.video)) video_order.push_back(r.video);
    by_video[r.video].push_back(&r);
  }

  std::vector<TubeRecord> out;
  for (const std::string& video : video_order) {
    for (int label = 1; label <= C; ++label) {
      std::vector<LinkCandidate> candidates;
      for (const DetectionRecord* r : by_video[video]) {
        const double score = r->probs.at(static_cast<std::size_t>(label));
        if (score < cfg.link.min_score) continue;
        LinkCandidate c;
        c.clip = r->clip;
        c.window = {static_cast<std::int64_t>(r->clip) * K,
                    static_cast<std::int64_t>(r->clip + 1) * K};
        c.score = score;
        c.tubelet = r->tubelet;
        candidates.push_back(std::move(c));
      }
      for (ActionTube& tube : link_tubes(candidates, label, cfg.link.threshold)) {
        tube.trimmed = temporal_trim(tube, cfg.link.smoothness);
        if (tube.trimmed.empty()) continue;
        TubeRecord rec;
        rec.video = video;
        rec.label = label;
        rec.score = tube.score;
        rec.tubelet.start_frame = tube.trimmed.begin;
        for (std::int64_t f = tube.trimmed.begin; f < tube.trimmed.end; ++f) {
          for (const auto& m : tube.members)
            if (m.window.contains(f)) {
              rec.tubelet.boxes.push_back(m.tubelet.box_at(f));
              break;
            }
        }
        out.push_back(std::move(rec));
      }
    }
  }
  return out;
}

struct EvalOutput {
  json summary;
  CsvTable frame_ap;      // class, ap
  CsvTable video_ap;      // threshold, class, ap
  CsvTable miut_report;   // length, mean_miut, windows
  CsvTable histogram;     // step, bin_lo, bin_hi, count
  IoUHistogram iou_hist;  // input-IoU distribution per step
  std::vector<double> frame_map_by_step;  // indexed by step-1
};

namespace detail {

inline IoUHistogram histogram_from_values(std::vector<std::vector<double>> values_per_step,
                                          double bin_width) {
  IoUHistogram hist;
  hist.bin_width = bin_width;
  const int bins = static_cast<int>(std::ceil(1.0 / bin_width));
  for (auto& values : values_per_step) {
    std::vector<int> counts(static_cast<std::size_t>(bins), 0);
    for (double v : values)
      ++counts[static_cast<std::size_t>(std::min(static_cast<int>(v / bin_width), bins - 1))];
    std::sort(values.begin(), values.end());
    hist.medians.push_back(values.empty() ? 0.0 : values[values.size() / 2]);
    hist.counts.push_back(std::move(counts));
  }
  return hist;
}

}  // namespace detail

/**
 * @brief Evaluate detections (and optionally linked tubes) against the
 * simulated ground truth: frame-mAP overall and per step, video-mAP at the
 * configured thresholds, the MIUT report, and per-step input-IoU histograms.
 */
inline EvalOutput run_eval(const ExperimentConfig& cfg, const std::vector<VideoScene>& scenes,
                           const std::vector<DetectionRecord>& records,
                           const std::vector<TubeRecord>* tubes) {
  const int C = cfg.scene.num_classes;
  const int K = cfg.step.clip_length;
  const int S = cfg.step.num_steps;
  std::map<std::string, const Scene*> scene_by_video;
  for (const VideoScene& vs : scenes) scene_by_video[vs.name] = &vs.scene;

  std::vector<FrameGroundTruth> frame_gt;
  for (const VideoScene& vs : scenes)
    for (const GroundTruthTube& t : vs.scene.tubes)
      for (std::int64_t f = t.tubelet.start_frame; f < t.tubelet.range().end; ++f)
        frame_gt.push_back({vs.name, f, t.label, t.tubelet.box_at(f)});

  // frame detections per step, restricted to each clip's own window
  std::vector<std::vector<FrameDetection>> dets_by_step(static_cast<std::size_t>(S) + 1);
  std::vector<std::vector<double>> input_iou(static_cast<std::size_t>(S));
  for (const DetectionRecord& r : records) {
    const auto scene_it = scene_by_video.find(r.video);
    if (scene_it == scene_by_video.end()) throw ConfigError("detections reference unknown video " + r.video);
    const FrameInterval window{static_cast<std::int64_t>(r.clip) * K,
                               static_cast<std::int64_t>(r.clip + 1) * K};
    if (r.step >= 1) {
      auto& sink = dets_by_step[static_cast<std::size_t>(r.step)];
      for (std::int64_t f = window.begin; f < window.end; ++f)
        for (int c = 1; c <= C; ++c)
          sink.push_back({r.video, f, c, r.probs.at(static_cast<std::size_t>(c)),
                          r.tubelet.box_at(f)});
    }
    if (r.step < S) {
      // records of step s are the refine-time inputs of step s+1 on the
      // target clip (extension only adds wing frames)
      double best = 0;
      for (const GroundTruthTube& t : scene_it->second->tubes)
        best = std::max(best, clip_overlap(r.tubelet, t.tubelet, window));
      input_iou[static_cast<std::size_t>(r.step)].push_back(best);
    }
  }

  EvalOutput out;
  const EvalResult final_eval =
      frame_map(dets_by_step[static_cast<std::size_t>(S)], frame_gt, cfg.eval.frame_iou);
  out.frame_ap.header = {"class", "ap", "num_gt", "num_detections"};
  for (const ClassAP& c : final_eval.per_class)
    out.frame_ap.rows.push_back({std::to_string(c.label), format_double(c.ap),
                                 std::to_string(c.num_gt), std::to_string(c.num_detections)});

  for (int s = 1; s <= S; ++s)
    out.frame_map_by_step.push_back(
        frame_map(dets_by_step[static_cast<std::size_t>(s)], frame_gt, cfg.eval.frame_iou)
            .mean_ap);

  out.iou_hist = detail::histogram_from_values(std::move(input_iou), cfg.eval.histogram_bin);
  out.histogram.header = {"step", "bin_lo", "bin_hi", "count"};
  for (std::size_t s = 0; s < out.iou_hist.counts.size(); ++s)
    for (std::size_t b = 0; b < out.iou_hist.counts[s].size(); ++b)
      out.histogram.rows.push_back(
          {std::to_string(s + 1), format_double(out.iou_hist.bin_width * static_cast<double>(b)),
           format_double(std::min(1.0, out.iou_hist.bin_width * static_cast<double>(b + 1))),
           std::to_string(out.iou_hist.counts[s][b])});

  // MIUT over non-overlapping windows of every ground-truth tube
  out.miut_report.header = {"length", "mean_miut", "windows"};
  json miut_summary = json::object();
  for (int len : cfg.eval.miut_lengths) {
    double sum = 0;
    int count = 0;
    for (const VideoScene& vs : scenes)
      for (const GroundTruthTube& t : vs.scene.tubes)
        for (std::int64_t start = 0; start + len <= t.tubelet.length(); start += len) {
          Tubelet window;
          window.start_frame = t.tubelet.start_frame + start;
          window.boxes.assign(
              t.tubelet.boxes.begin() + static_cast<std::ptrdiff_t>(start),
              t.tubelet.boxes.begin() + static_cast<std::ptrdiff_t>(start + len));
          sum += miut(window);
          ++count;
        }
    const double mean = count > 0 ? sum / count : 0.0;
    out.miut_report.rows.push_back(
        {std::to_string(len), format_double(mean), std::to_string(count)});
    miut_summary[std::to_string(len)] = mean;
  }

  out.summary["frame_map"] = final_eval.mean_ap;
  json per_class = json::object();
  for (const ClassAP& c : final_eval.per_class) per_class[std::to_string(c.label)] = c.ap;
  out.summary["frame_ap_per_class"] = per_class;
  json by_step = json::array();
  for (double v : out.frame_map_by_step) by_step.push_back(v);
  out.summary["frame_map_by_step"] = by_step;
  out.summary["histogram_medians"] = out.iou_hist.medians;
  out.summary["miut"] = miut_summary;

  if (tubes) {
    std::vector<VideoTubeDetection> tube_dets;
    for (const TubeRecord& t : *tubes) tube_dets.push_back({t.video, t.label, t.score, t.tubelet});
    std::vector<VideoTubeGroundTruth> tube_gt;
    for (const VideoScene& vs : scenes)
      for (const GroundTruthTube& t : vs.scene.tubes)
        tube_gt.push_back({vs.name, t.label, t.tubelet});
    out.video_ap.header = {"threshold", "class", "ap"};
    json video_summary = json::object();
    for (double threshold : cfg.eval.video_iou) {
      const EvalResult r = video_map(tube_dets, tube_gt, threshold);
      for (const ClassAP& c : r.per_class)
        out.video_ap.rows.push_back(
            {format_double(threshold), std::to_string(c.label), format_double(c.ap)});
      video_summary[format_double(threshold)] = r.mean_ap;
    }
    out.summary["video_map"] = video_summary;
  }
  return out;
}

}  // namespace step
