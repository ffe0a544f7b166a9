#include <gtest/gtest.h>

#include "hgsprune/plot.hpp"

using namespace hgsp;

TEST(Plot, LineChartHasOnePolylinePerSeries) {
    const auto svg = plot::line_chart("t", "x", "y", {{"a", {0.1, 0.2}, {1, 2}}, {"b&c", {0.1}, {3}}});
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    std::size_t n = 0;
    for (auto p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++n;
    EXPECT_EQ(n, 2u);
    EXPECT_NE(svg.find("b&amp;c"), std::string::npos);
}

TEST(Plot, BarChartRectanglesPerValue) {
    const auto svg = plot::bar_chart("t", "x", "y", {"0", "1", "2"}, {{"a", {}, {1, 0, 2}}, {"b", {}, {3, 1, 1}}});
    std::size_t n = 0;
    for (auto p = svg.find("<rect x="); p != std::string::npos; p = svg.find("<rect x=", p + 1)) ++n;
    EXPECT_EQ(n, 6u + 2u);  // bars + legend swatches
}

TEST(Plot, EmptyInputStillValid) {
    EXPECT_NE(plot::line_chart("t", "x", "y", {}).find("</svg>"), std::string::npos);
    EXPECT_NE(plot::bar_chart("t", "x", "y", {}, {}).find("</svg>"), std::string::npos);
}
