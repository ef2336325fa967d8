#pragma once

#include <optional>
#include <string>
#include <vector>

#include "eqm/data.hpp"
#include "eqm/sampler.hpp"

namespace eqm::plot {

// Every function returns a complete SVG document. Output depends only on the
// inputs: coordinates use fixed precision and nothing time- or host-dependent
// is written.

struct Extent {
  Point2 lo{-3.0, -3.0};
  Point2 hi{3.0, 3.0};
  void validate() const;
};

/// One arrow per grid node (grid x grid arrows), pointing along -gradient,
/// lengths normalized by the largest gradient on the grid.
std::string vector_field(const GradientField& field, const Extent& extent, std::size_t grid = 40,
                         double t = 0.0, const std::string& title = "");

struct Series {
  std::string name;
  ad::Tensor points;  // [n, 2]
};

std::string scatter(const std::vector<Series>& series, const Extent& extent,
                    const std::string& title = "");

/// Contour lines of the model energy on a resolution x resolution grid.
/// Throws ValidationError for models without an energy head.
std::string energy_contours(const GradientFieldModel& model, const Extent& extent,
                            std::size_t resolution = 60, std::size_t levels = 12,
                            std::optional<int> label = std::nullopt, const std::string& title = "");

/// Histogram of integer step counts.
std::string histogram(const std::vector<std::size_t>& values, std::size_t bins = 20,
                      const std::string& title = "", const std::string& xlabel = "steps");

struct Curve {
  std::string name;
  std::vector<double> y;
};

/// Line plot of one or more curves over shared x values.
std::string curves(const std::vector<double>& x, const std::vector<Curve>& ys,
                   const std::string& title = "", const std::string& xlabel = "",
                   const std::string& ylabel = "");

}  // namespace eqm::plot
