#pragma once

#include <string>
#include <vector>

namespace tadlab::eval {

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

// Self-contained SVG documents; whiskers at min/max, boxes at quartiles.
std::string svg_box_plot(const std::string& title, const std::vector<std::string>& names,
                         const std::vector<std::vector<double>>& samples,
                         const std::string& y_label);

std::string svg_line_plot(const std::string& title, const std::vector<Series>& series,
                          const std::string& x_label, const std::string& y_label);

std::string svg_bar_plot(const std::string& title, const std::vector<std::string>& names,
                         const std::vector<double>& values, const std::string& y_label);

}  // namespace tadlab::eval
