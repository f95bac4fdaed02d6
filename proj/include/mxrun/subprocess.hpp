#pragma once

#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstring>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

extern char** environ;

namespace mxrun {

struct CommandSpec {
  std::string shell_command;  // run via /bin/sh -c
  std::vector<std::pair<std::string, std::string>> env;  // added to the inherited env
  std::optional<std::chrono::milliseconds> timeout;
};

struct CommandResult {
  bool spawn_failed = false;
  std::string spawn_error;
  bool exited = false;   // normal exit (code valid)
  int exit_code = -1;
  int term_signal = 0;   // nonzero when killed by a signal
  bool timed_out = false;
  std::string stdout_data;
  std::string stderr_data;
  std::chrono::system_clock::time_point started_at;
  std::chrono::system_clock::time_point finished_at;
};

namespace detail {

// Flattens the inherited environment plus overrides into an execve() block.
// Later entries replace earlier ones with the same name.
inline std::vector<std::string> merged_environment(
    const std::vector<std::pair<std::string, std::string>>& extra) {
  std::map<std::string, std::string> merged;
  for (char** e = environ; e && *e; e++) {
    const char* eq = std::strchr(*e, '=');
    if (!eq) continue;
    merged[std::string(*e, static_cast<std::size_t>(eq - *e))] = std::string(eq + 1);
  }
  for (const auto& [k, v] : extra) merged[k] = v;
  std::vector<std::string> block;
  block.reserve(merged.size());
  for (const auto& [k, v] : merged) block.push_back(k + "=" + v);
  return block;
}

}  // namespace detail

// Runs a shell command, capturing stdout and stderr completely. On timeout
// the direct child is SIGKILLed and the result is flagged; a shell that
// already forked grandchildren may leave them behind, like make(1) does.
// Never throws for child failures; they are encoded in the result.
inline CommandResult run_shell_command(const CommandSpec& spec) {
  CommandResult result;
  result.started_at = std::chrono::system_clock::now();

  int out_pipe[2], err_pipe[2], exec_pipe[2];
  if (::pipe2(out_pipe, O_CLOEXEC) != 0 || ::pipe2(err_pipe, O_CLOEXEC) != 0 ||
      ::pipe2(exec_pipe, O_CLOEXEC) != 0) {
    result.spawn_failed = true;
    result.spawn_error = std::string("pipe: ") + std::strerror(errno);
    result.finished_at = std::chrono::system_clock::now();
    return result;
  }

  // execve() arguments must be ready before fork(): only async-signal-safe
  // calls are allowed in the child of a multithreaded process.
  std::vector<std::string> env_block = detail::merged_environment(spec.env);
  std::vector<char*> envp;
  envp.reserve(env_block.size() + 1);
  for (auto& s : env_block) envp.push_back(s.data());
  envp.push_back(nullptr);
  const char* argv[] = {"/bin/sh", "-c", spec.shell_command.c_str(), nullptr};

  pid_t pid = ::fork();
  if (pid < 0) {
    result.spawn_failed = true;
    result.spawn_error = std::string("fork: ") + std::strerror(errno);
    for (int fd : {out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1], exec_pipe[0],
                   exec_pipe[1]}) {
      ::close(fd);
    }
    result.finished_at = std::chrono::system_clock::now();
    return result;
  }

  if (pid == 0) {
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::dup2(err_pipe[1], STDERR_FILENO);
    ::execve("/bin/sh", const_cast<char* const*>(argv), envp.data());
    int saved = errno;
    ssize_t ignored = ::write(exec_pipe[1], &saved, sizeof saved);
    (void)ignored;
    ::_exit(127);
  }

  ::close(out_pipe[1]);
  ::close(err_pipe[1]);
  ::close(exec_pipe[1]);

  struct Fd {
    int fd;
    std::string* sink;
    bool open;
  };
  std::string exec_err_bytes;
  Fd fds[3] = {{out_pipe[0], &result.stdout_data, true},
               {err_pipe[0], &result.stderr_data, true},
               {exec_pipe[0], &exec_err_bytes, true}};

  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  std::optional<clock::time_point> deadline;
  if (spec.timeout) deadline = start + *spec.timeout;
  bool killed = false;

  while (fds[0].open || fds[1].open || fds[2].open) {
    struct pollfd pfds[3];
    int n = 0;
    for (auto& f : fds) {
      if (!f.open) continue;
      pfds[n].fd = f.fd;
      pfds[n].events = POLLIN;
      pfds[n].revents = 0;
      n++;
    }
    int wait_ms = -1;
    if (deadline) {
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(*deadline -
                                                                        clock::now());
      wait_ms = static_cast<int>(std::max<long long>(0, left.count()));
    }
    int rc = ::poll(pfds, static_cast<nfds_t>(n), wait_ms);
    if (rc < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (rc == 0) {
      // Deadline reached: kill the child and give it a short grace period
      // to flush before we stop reading.
      if (!killed) {
        ::kill(pid, SIGKILL);
        killed = true;
        result.timed_out = true;
        deadline = clock::now() + std::chrono::milliseconds(250);
        continue;
      }
      break;
    }
    for (int i = 0; i < n; i++) {
      if (!(pfds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      for (auto& f : fds) {
        if (!f.open || f.fd != pfds[i].fd) continue;
        char buf[8192];
        ssize_t got = ::read(f.fd, buf, sizeof buf);
        if (got > 0) {
          f.sink->append(buf, static_cast<std::size_t>(got));
        } else if (got == 0 || (got < 0 && errno != EINTR)) {
          ::close(f.fd);
          f.open = false;
        }
        break;
      }
    }
  }
  for (auto& f : fds) {
    if (f.open) ::close(f.fd);
  }

  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  result.finished_at = std::chrono::system_clock::now();

  if (exec_err_bytes.size() >= sizeof(int)) {
    int err = 0;
    std::memcpy(&err, exec_err_bytes.data(), sizeof err);
    result.spawn_failed = true;
    result.spawn_error = std::string("exec /bin/sh: ") + std::strerror(err);
    return result;
  }
  if (WIFEXITED(status)) {
    result.exited = true;
    result.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    result.term_signal = WTERMSIG(status);
  }
  return result;
}

}  // namespace mxrun
