#pragma once

// SVG and CSV output for learning curves and relative trajectories.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hmt/learner/train.hpp"
#include "hmt/orchestrator.hpp"

namespace hmt {

/// Red and zone-center positions relative to the blue UAV that neutralized
/// the red, one point per recorded step.
struct RelativeTrajectory {
  std::string episode_id;
  EntityId blue = 0;
  EntityId red = 0;
  std::vector<Vec2> red_path;
  std::vector<Vec2> zone_path;
  double zone_radius = 0.0;
};

/// Empty when no blue neutralized a red in the episode.
std::optional<RelativeTrajectory> relative_trajectory(const EpisodeRecord& record);

std::string trajectories_svg(const std::vector<RelativeTrajectory>& trajectories);
/// Columns: episode, blue, red, step, red_x, red_y, zone_x, zone_y.
void write_trajectories_csv(std::ostream& out, const std::vector<RelativeTrajectory>& trajectories);

struct CurveSeries {
  std::string label;
  std::vector<EvalPoint> evals;  // any number of seeds
};

struct CurvePoint {
  int episode = 0;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  int seeds = 0;
};

/// Mean and range of success rate across seeds at every evaluated episode.
/// Seeds that stopped early carry their last value forward.
std::vector<CurvePoint> mean_curve(const std::vector<EvalPoint>& evals);

std::string curves_svg(const std::vector<CurveSeries>& series, std::optional<double> reference = std::nullopt);
/// Columns: label, episode, mean, min, max, seeds.
void write_curves_csv(std::ostream& out, const std::vector<CurveSeries>& series);

}  // namespace hmt
