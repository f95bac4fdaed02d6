#pragma once

// Shared test scaffolding: scratch directories, CLI invocation with a
// working directory, and small file utilities.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

namespace testutil {

namespace fs = std::filesystem;

class TempDir {
public:
  explicit TempDir(const std::string& prefix = "mxrun-test") {
    std::string tmpl = (fs::temp_directory_path() / (prefix + "-XXXXXX")).string();
    std::vector<char> buf(tmpl.begin(), tmpl.end());
    buf.push_back('\0');
    if (!::mkdtemp(buf.data())) throw std::runtime_error("mkdtemp failed");
    path_ = buf.data();
  }

  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }

  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }

private:
  fs::path path_;
};

inline void write_file(const fs::path& p, const std::string& data) {
  std::error_code ec;
  if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  return std::string{std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>()};
}

inline std::size_t line_count(const fs::path& p) {
  std::string text = read_file(p);
  std::size_t n = 0;
  for (char c : text) {
    if (c == '\n') n++;
  }
  return n;
}

struct CliResult {
  int exit_code = -1;
  bool signaled = false;
  int signal = 0;
  std::string out;
  std::string err;
};

// Runs an executable with argv, in `cwd`, capturing both streams.
inline CliResult run_process(const std::string& exe, std::vector<std::string> args,
                             const fs::path& cwd) {
  fs::path out_file = cwd / ".test-stdout";
  fs::path err_file = cwd / ".test-stderr";

  std::vector<char*> argv;
  argv.push_back(const_cast<char*>(exe.c_str()));
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);

  pid_t pid = ::fork();
  if (pid < 0) throw std::runtime_error("fork failed");
  if (pid == 0) {
    if (::chdir(cwd.c_str()) != 0) ::_exit(125);
    int out_fd = ::open(out_file.c_str(), O_CREAT | O_TRUNC | O_WRONLY, 0644);
    int err_fd = ::open(err_file.c_str(), O_CREAT | O_TRUNC | O_WRONLY, 0644);
    if (out_fd < 0 || err_fd < 0) ::_exit(125);
    ::dup2(out_fd, STDOUT_FILENO);
    ::dup2(err_fd, STDERR_FILENO);
    ::execv(exe.c_str(), argv.data());
    ::_exit(126);
  }

  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  CliResult result;
  if (WIFEXITED(status)) {
    result.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    result.signaled = true;
    result.signal = WTERMSIG(status);
  }
  std::error_code ec;
  if (fs::exists(out_file, ec)) result.out = read_file(out_file);
  if (fs::exists(err_file, ec)) result.err = read_file(err_file);
  fs::remove(out_file, ec);
  fs::remove(err_file, ec);
  return result;
}

// Launches a process in its own process group and returns immediately.
// kill(-pid, SIGKILL) then wipes the process and all its children, which is
// what the crash-resumption suite uses to simulate an orchestrator death.
inline pid_t spawn_process_group(const std::string& exe, std::vector<std::string> args,
                                 const fs::path& cwd) {
  std::vector<char*> argv;
  argv.push_back(const_cast<char*>(exe.c_str()));
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);

  pid_t pid = ::fork();
  if (pid < 0) throw std::runtime_error("fork failed");
  if (pid == 0) {
    ::setpgid(0, 0);
    if (::chdir(cwd.c_str()) != 0) ::_exit(125);
    int null_fd = ::open("/dev/null", O_RDWR);
    ::dup2(null_fd, STDOUT_FILENO);
    ::dup2(null_fd, STDERR_FILENO);
    ::execv(exe.c_str(), argv.data());
    ::_exit(126);
  }
  ::setpgid(pid, pid);  // both sides set it to close the race
  return pid;
}

inline std::mt19937& rng() {
  static std::mt19937 gen(0xC0FFEE);
  return gen;
}

}  // namespace testutil
