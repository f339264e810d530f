#pragma once

#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstring>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include "treebo/objective.hpp"

namespace treebo {

/// Objective adapter around an external evaluator process.
///
/// Line protocol (newline-terminated, ASCII decimal floats, space-separated):
///   request:  "EVAL d x1 x2 ... xd"
///   response: "OK f"  or, in constrained mode, "OK f m h1 ... hm"
///   error:    "ERR <message>"
///
/// One request is in flight at a time; constrained responses are folded into
/// a single value by squared-violation penalization, with the most recent
/// violation statistics kept for reporting.  The child is terminated when the
/// adapter is destroyed.
class ExternalEvaluator {
 public:
  explicit ExternalEvaluator(std::string command, double timeout_seconds = 300.0)
      : command_(std::move(command)), timeout_seconds_(timeout_seconds) {
    spawn();
  }

  ~ExternalEvaluator() { shutdown(); }

  ExternalEvaluator(const ExternalEvaluator&) = delete;
  ExternalEvaluator& operator=(const ExternalEvaluator&) = delete;

  PenalizedValue eval(const Vector& x) {
    std::lock_guard<std::mutex> lock(mutex_);
    if (pid_ < 0) throw EvaluationError("external evaluator: child not running");

    std::ostringstream req;
    req << "EVAL " << x.size();
    char buf[64];
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      std::snprintf(buf, sizeof(buf), " %.17g", x[i]);
      req << buf;
    }
    req << "\n";
    write_all(req.str());

    const std::string line = read_line();
    return parse_response(line);
  }

  PenalizedValue last_stats() const { return last_stats_; }

 private:
  void spawn() {
    // A dead child must surface as EPIPE on write, not as SIGPIPE.
    ::signal(SIGPIPE, SIG_IGN);
    int to_child[2];
    int from_child[2];
    if (::pipe(to_child) != 0 || ::pipe(from_child) != 0)
      throw EvaluationError("external evaluator: pipe creation failed");
    pid_ = ::fork();
    if (pid_ < 0) throw EvaluationError("external evaluator: fork failed");
    if (pid_ == 0) {
      ::setpgid(0, 0);  // own process group, so shutdown can kill the whole command
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
      std::_Exit(127);
    }
    ::setpgid(pid_, pid_);
    ::close(to_child[0]);
    ::close(from_child[1]);
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
  }

  void shutdown() {
    if (write_fd_ >= 0) ::close(write_fd_);
    if (read_fd_ >= 0) ::close(read_fd_);
    write_fd_ = read_fd_ = -1;
    if (pid_ > 0) {
      int status = 0;
      // Give the child a moment to exit on EOF, then kill its process group.
      bool reaped = false;
      for (int i = 0; i < 50; ++i) {
        if (::waitpid(pid_, &status, WNOHANG) == pid_) {
          reaped = true;
          break;
        }
        ::usleep(2000);
      }
      ::kill(-pid_, SIGKILL);
      if (!reaped) ::waitpid(pid_, &status, 0);
      pid_ = -1;
    }
  }

  void write_all(const std::string& s) {
    const char* p = s.data();
    std::size_t remaining = s.size();
    while (remaining > 0) {
      const ssize_t w = ::write(write_fd_, p, remaining);
      if (w <= 0) {
        fail("child closed its input");
      }
      p += w;
      remaining -= static_cast<std::size_t>(w);
    }
  }

  std::string read_line() {
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::duration<double>(timeout_seconds_);
    while (true) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      const auto now = std::chrono::steady_clock::now();
      if (now >= deadline) fail("timeout waiting for response");
      const auto remaining =
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now);
      struct pollfd pfd {};
      pfd.fd = read_fd_;
      pfd.events = POLLIN;
      const int pr = ::poll(&pfd, 1, static_cast<int>(remaining.count()) + 1);
      if (pr < 0) fail("poll failed");
      if (pr == 0) fail("timeout waiting for response");
      char chunk[4096];
      const ssize_t r = ::read(read_fd_, chunk, sizeof(chunk));
      if (r <= 0) fail("child exited before replying");
      buffer_.append(chunk, static_cast<std::size_t>(r));
    }
  }

  [[noreturn]] void fail(const std::string& why) {
    const std::string raw = buffer_;
    shutdown();
    throw EvaluationError("external evaluator: " + why, raw);
  }

  PenalizedValue parse_response(const std::string& line) {
    std::istringstream in(line);
    std::string tag;
    in >> tag;
    if (tag == "ERR") {
      std::string msg;
      std::getline(in, msg);
      throw EvaluationError("external evaluator reported error:" + msg, line);
    }
    if (tag != "OK")
      throw EvaluationError("external evaluator: malformed response line", line);
    double f = 0.0;
    if (!(in >> f))
      throw EvaluationError("external evaluator: unparsable objective value", line);
    long long m = -1;
    if (in >> m) {
      if (m < 0) throw EvaluationError("external evaluator: negative constraint count", line);
      std::vector<double> h(static_cast<std::size_t>(m));
      for (long long i = 0; i < m; ++i)
        if (!(in >> h[static_cast<std::size_t>(i)]))
          throw EvaluationError("external evaluator: missing constraint value", line);
      last_stats_ = penalize_values(f, h);
    } else {
      last_stats_ = PenalizedValue{f, 0, 0.0};
    }
    return last_stats_;
  }

  std::string command_;
  double timeout_seconds_;
  pid_t pid_ = -1;
  int write_fd_ = -1;
  int read_fd_ = -1;
  std::string buffer_;
  std::mutex mutex_;
  PenalizedValue last_stats_;
};

/// Wraps an external evaluator command as an Objective on the given domain.
inline Objective external_objective(const std::string& command, Domain domain,
                                    double timeout_seconds = 300.0) {
  auto child = std::make_shared<ExternalEvaluator>(command, timeout_seconds);
  auto fn = [child](const Vector& x) { return child->eval(x).value; };
  return Objective(std::move(domain), std::move(fn), "external:" + command);
}

}  // namespace treebo
