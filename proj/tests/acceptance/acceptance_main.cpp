// Acceptance suite: one pass/fail line per criterion.
//
//   acceptance                 run all criteria
//   acceptance --criterion N   run a single criterion

#include "acceptance.hpp"

#include <algorithm>
#include <cstring>
#include <iostream>
#include <sstream>

namespace acceptance {

std::vector<Criterion>& registry() {
  static std::vector<Criterion> r;
  return r;
}

Register::Register(int number, std::string title, std::function<bool(std::ostream&)> run) {
  registry().push_back({number, std::move(title), std::move(run)});
}

std::string data_path(const std::string& name) {
  return std::string(DTANMA_DATA_DIR) + "/" + name;
}

}  // namespace acceptance

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) only = std::atoi(argv[i + 1]);
  }

  auto& reg = acceptance::registry();
  std::sort(reg.begin(), reg.end(),
            [](const auto& a, const auto& b) { return a.number < b.number; });

  int failures = 0;
  for (const auto& c : reg) {
    if (only != 0 && c.number != only) continue;
    std::ostringstream detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail << "exception: " << e.what();
    }
    std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << c.number << ": " << c.title;
    const std::string d = detail.str();
    if (!d.empty()) std::cout << " (" << d << ")";
    std::cout << std::endl;
    failures += ok ? 0 : 1;
  }
  return failures;
}
