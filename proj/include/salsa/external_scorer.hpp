#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "salsa/errors.hpp"
#include "salsa/oracle.hpp"
#include "salsa/space.hpp"

namespace salsa {

// Wire protocol with an external scorer process, one batch per subprocess:
//
//   request:  <request_id>\t<item_id_vec0>\t<item_id_vec1>\t<features_csv...>\n
//   response: <request_id>\t<score_decimal>\n        (any order)
//
// The features field is the comma-separated concatenation of the candidate's
// per-vector feature vectors, vector 0 first. The client closes the scorer's
// stdin after the last request, reads until every id has been answered, and
// reassembles scores in input order. Missing or extra responses, malformed
// lines, and deadline overruns are hard errors, never silent drops.

struct ExternalScorerConfig {
  std::string command;      // run via /bin/sh -c
  int timeout_ms = 300000;  // whole-batch deadline
};

namespace detail {

inline void ignore_sigpipe_once() {
  static const bool done = [] {
    ::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)done;
}

struct ChildProcess {
  pid_t pid = -1;
  int stdin_fd = -1;
  int stdout_fd = -1;

  ~ChildProcess() {
    if (stdin_fd >= 0) ::close(stdin_fd);
    if (stdout_fd >= 0) ::close(stdout_fd);
    if (pid > 0) {
      ::kill(pid, SIGKILL);
      int status = 0;
      ::waitpid(pid, &status, 0);
    }
  }

  void reap() {
    if (pid > 0) {
      int status = 0;
      ::waitpid(pid, &status, 0);
      pid = -1;
    }
  }
};

inline ChildProcess spawn_shell(const std::string& command) {
  ignore_sigpipe_once();
  int in_pipe[2];   // parent writes -> child stdin
  int out_pipe[2];  // child stdout -> parent reads
  if (::pipe(in_pipe) != 0 || ::pipe(out_pipe) != 0) {
    throw ScorerError("pipe() failed: " + std::string(std::strerror(errno)));
  }
  pid_t pid = ::fork();
  if (pid < 0) {
    throw ScorerError("fork() failed: " + std::string(std::strerror(errno)));
  }
  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), (char*)nullptr);
    std::perror("exec scorer");
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ChildProcess child;
  child.pid = pid;
  child.stdin_fd = in_pipe[1];
  child.stdout_fd = out_pipe[0];
  ::fcntl(child.stdin_fd, F_SETFL, O_NONBLOCK);
  ::fcntl(child.stdout_fd, F_SETFL, O_NONBLOCK);
  return child;
}

}  // namespace detail

// Sends one batch to a freshly launched scorer subprocess and gathers the
// responses. Scorers are free to buffer everything until EOF.
inline std::vector<double> external_score_batch(
    const ExternalScorerConfig& config, const ProductSpace& space,
    std::span<const Candidate> candidates) {
  if (candidates.empty()) return {};

  // Build the request payload up front.
  std::string payload;
  char buf[64];
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    payload += std::to_string(i);
    auto refs = space.decompose(candidates[i]);
    for (const auto& ref : refs) {
      payload += '\t';
      payload += *ref.id;
    }
    payload += '\t';
    bool first = true;
    for (const auto& ref : refs) {
      for (double x : ref.features) {
        if (!first) payload += ',';
        first = false;
        std::snprintf(buf, sizeof(buf), "%.17g", x);
        payload += buf;
      }
    }
    payload += '\n';
  }

  detail::ChildProcess child = detail::spawn_shell(config.command);

  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::milliseconds(config.timeout_ms);
  std::size_t written = 0;
  std::string incoming;
  std::vector<double> scores(candidates.size(), 0.0);
  std::vector<std::uint8_t> seen(candidates.size(), 0);
  std::size_t n_seen = 0;

  auto parse_lines = [&]() {
    std::size_t start = 0;
    for (;;) {
      std::size_t nl = incoming.find('\n', start);
      if (nl == std::string::npos) break;
      std::string_view line(incoming.data() + start, nl - start);
      start = nl + 1;
      if (line.empty()) continue;
      std::size_t tab = line.find('\t');
      if (tab == std::string_view::npos) {
        throw ScorerProtocolError("malformed response line (no tab): '" +
                                  std::string(line) + "'");
      }
      std::uint64_t id = 0;
      const char* id_begin = line.data();
      const char* id_end = line.data() + tab;
      auto idres = std::from_chars(id_begin, id_end, id);
      if (idres.ec != std::errc() || idres.ptr != id_end) {
        throw ScorerProtocolError("malformed request id in response: '" +
                                  std::string(line) + "'");
      }
      if (id >= candidates.size()) {
        throw ScorerProtocolError("response id out of range: " +
                                  std::to_string(id));
      }
      if (seen[id]) {
        throw ScorerProtocolError("duplicate response for request " +
                                  std::to_string(id));
      }
      std::string score_text(line.substr(tab + 1));
      char* endp = nullptr;
      double value = std::strtod(score_text.c_str(), &endp);
      if (endp == score_text.c_str() || *endp != '\0') {
        throw ScorerProtocolError("malformed score in response: '" +
                                  std::string(line) + "'");
      }
      scores[id] = value;
      seen[id] = 1;
      ++n_seen;
    }
    incoming.erase(0, start);
  };

  while (n_seen < candidates.size()) {
    auto now = std::chrono::steady_clock::now();
    if (now >= deadline) {
      throw ScorerTimeoutError("external scorer timed out after " +
                               std::to_string(config.timeout_ms) + " ms");
    }
    int wait_ms = static_cast<int>(
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now)
            .count());
    wait_ms = std::max(1, std::min(wait_ms, 200));

    struct pollfd fds[2];
    nfds_t nfds = 0;
    int read_slot = -1, write_slot = -1;
    if (child.stdout_fd >= 0) {
      read_slot = static_cast<int>(nfds);
      fds[nfds++] = {child.stdout_fd, POLLIN, 0};
    }
    if (child.stdin_fd >= 0 && written < payload.size()) {
      write_slot = static_cast<int>(nfds);
      fds[nfds++] = {child.stdin_fd, POLLOUT, 0};
    }
    int rc = ::poll(fds, nfds, wait_ms);
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw ScorerError("poll() failed: " + std::string(std::strerror(errno)));
    }

    if (write_slot >= 0 && (fds[write_slot].revents & (POLLOUT | POLLERR))) {
      ssize_t n = ::write(child.stdin_fd, payload.data() + written,
                          payload.size() - written);
      if (n > 0) {
        written += static_cast<std::size_t>(n);
      } else if (n < 0 && errno != EAGAIN && errno != EINTR) {
        // Child closed its stdin; it may still produce responses.
        ::close(child.stdin_fd);
        child.stdin_fd = -1;
      }
      if (written == payload.size() && child.stdin_fd >= 0) {
        ::close(child.stdin_fd);  // EOF tells the scorer the batch is complete
        child.stdin_fd = -1;
      }
    }

    if (read_slot >= 0 && (fds[read_slot].revents & (POLLIN | POLLHUP))) {
      char rbuf[65536];
      ssize_t n = ::read(child.stdout_fd, rbuf, sizeof(rbuf));
      if (n > 0) {
        incoming.append(rbuf, static_cast<std::size_t>(n));
        parse_lines();
      } else if (n == 0) {
        // EOF before all responses arrived.
        child.reap();
        throw ScorerProtocolError(
            "scorer closed output after " + std::to_string(n_seen) + " of " +
            std::to_string(candidates.size()) + " responses (count mismatch)");
      } else if (errno != EAGAIN && errno != EINTR) {
        throw ScorerError("read() failed: " +
                          std::string(std::strerror(errno)));
      }
    }
  }
  child.reap();
  return scores;
}

// ObjectiveFn adapter so external scorers plug into ledgers and runs.
class ExternalObjective : public ObjectiveFn {
 public:
  ExternalObjective(ExternalScorerConfig config,
                    std::shared_ptr<const ProductSpace> space)
      : config_(std::move(config)), space_(std::move(space)) {
    if (config_.command.empty()) {
      throw ConfigError("external scorer command is empty");
    }
  }

  std::string descriptor() const override { return "external"; }

 protected:
  std::vector<double> do_score(std::span<const Candidate> batch) override {
    return external_score_batch(config_, *space_, batch);
  }

 private:
  ExternalScorerConfig config_;
  std::shared_ptr<const ProductSpace> space_;
};

}  // namespace salsa
