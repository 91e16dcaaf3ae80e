#include <vector>

#include "cowmask/maskgen.hpp"

namespace cowmask {

int count_components(const Plane& binary) {
  const int h = binary.height;
  const int w = binary.width;
  std::vector<char> seen(binary.size(), 0);
  std::vector<int> stack;
  int count = 0;
  for (int start = 0; start < h * w; ++start) {
    if (seen[start] || binary.values[start] != 1.0) continue;
    ++count;
    seen[start] = 1;
    stack.push_back(start);
    while (!stack.empty()) {
      const int idx = stack.back();
      stack.pop_back();
      const int y = idx / w;
      const int x = idx % w;
      const int neighbours[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
      for (const auto& [ny, nx] : neighbours) {
        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
        const int n = ny * w + nx;
        if (!seen[n] && binary.values[n] == 1.0) {
          seen[n] = 1;
          stack.push_back(n);
        }
      }
    }
  }
  return count;
}

}  // namespace cowmask
