// Test double for the external-scorer wire protocol. Reads request lines
// (<id>\t<item_ids...>\t<features_csv>) from stdin and answers
// <id>\t<score> lines on stdout. The mode argument selects a behavior:
//
//   sum      score = sum of the feature values (default)
//   zero     score = 0 for every candidate
//   reverse  buffer all requests, answer in reverse order
//   short    swallow the final response (count mismatch)
//   garbage  emit one malformed line among the responses
//   sleep N  sleep N milliseconds before answering anything

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace {

struct Request {
  std::string id;
  double feature_sum = 0;
};

Request parse_request(const std::string& line) {
  Request r;
  const std::size_t first_tab = line.find('\t');
  if (first_tab == std::string::npos) {
    std::fprintf(stderr, "scorer-stub: malformed request: %s\n", line.c_str());
    std::exit(1);
  }
  r.id = line.substr(0, first_tab);
  const std::size_t last_tab = line.rfind('\t');
  std::stringstream features(line.substr(last_tab + 1));
  std::string field;
  while (std::getline(features, field, ',')) {
    r.feature_sum += std::strtod(field.c_str(), nullptr);
  }
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "sum";
  if (mode == "sleep") {
    const int ms = argc > 2 ? std::atoi(argv[2]) : 60000;
    std::this_thread::sleep_for(std::chrono::milliseconds(ms));
  }

  std::vector<Request> requests;
  std::string line;
  while (std::getline(std::cin, line)) {
    if (line.empty()) continue;
    requests.push_back(parse_request(line));
  }

  if (mode == "reverse") {
    for (auto it = requests.rbegin(); it != requests.rend(); ++it) {
      std::printf("%s\t%.17g\n", it->id.c_str(), it->feature_sum);
    }
    return 0;
  }

  for (std::size_t i = 0; i < requests.size(); ++i) {
    if (mode == "short" && i + 1 == requests.size()) break;
    if (mode == "garbage" && i == requests.size() / 2) {
      std::printf("this line has no tab separator\n");
    }
    const double score = mode == "zero" ? 0.0 : requests[i].feature_sum;
    std::printf("%s\t%.17g\n", requests[i].id.c_str(), score);
  }
  return 0;
}
