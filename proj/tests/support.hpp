#pragma once

#include <string>
#include <vector>

#include "erfe/panel.hpp"
#include "oracles.hpp"

namespace testing_support {

inline erfe::PanelData to_panel(const oracle::Panel& p) {
  std::vector<std::string> labels;
  for (int s : p.subject) labels.push_back("s" + std::to_string(s));
  return erfe::PanelData(std::move(labels), p.y, p.x, {});
}

}  // namespace testing_support
