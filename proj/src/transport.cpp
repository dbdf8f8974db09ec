// SPDX-License-Identifier: Apache-2.0
#include "wardpose/transport.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <thread>

#include "wardpose/error.hpp"

namespace wardpose {

namespace {

void ignore_sigpipe_once() {
  static const bool done = [] {
    ::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)done;
}

}  // namespace

FdChannel::FdChannel(int read_fd, int write_fd, bool owns) : read_fd_(read_fd), write_fd_(write_fd), owns_(owns) {
  ignore_sigpipe_once();
}

FdChannel::~FdChannel() { close(); }

void FdChannel::close() {
  if (owns_) {
    if (read_fd_ >= 0) ::close(read_fd_);
    if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
  }
  read_fd_ = -1;
  write_fd_ = -1;
}

void FdChannel::shutdown_write() {
  if (write_fd_ < 0) return;
  if (write_fd_ == read_fd_) {
    ::shutdown(write_fd_, SHUT_WR);
  } else {
    if (owns_) ::close(write_fd_);
    write_fd_ = -1;
  }
}

void FdChannel::write_all(std::span<const std::byte> data) {
  if (write_fd_ < 0) throw Error(ErrorCode::ChannelClosed, "channel closed for writing");
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::write(write_fd_, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN) {
        pollfd pfd{write_fd_, POLLOUT, 0};
        ::poll(&pfd, 1, 100);
        continue;
      }
      throw Error(ErrorCode::ChannelClosed, std::string("write failed: ") + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
}

std::size_t FdChannel::read_some(std::span<std::byte> buf, std::chrono::steady_clock::time_point deadline) {
  if (read_fd_ < 0) throw Error(ErrorCode::ChannelClosed, "channel closed for reading");
  for (;;) {
    const auto now = std::chrono::steady_clock::now();
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
    if (left <= 0) throw Error(ErrorCode::Timeout, "no data before deadline");
    pollfd pfd{read_fd_, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(left, 1000)));
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::ChannelClosed, std::string("poll failed: ") + std::strerror(errno));
    }
    if (rc == 0) continue;
    const ssize_t n = ::read(read_fd_, buf.data(), buf.size());
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      if (errno == ECONNRESET) return 0;
      throw Error(ErrorCode::ChannelClosed, std::string("read failed: ") + std::strerror(errno));
    }
    return static_cast<std::size_t>(n);
  }
}

std::pair<std::unique_ptr<FdChannel>, std::unique_ptr<FdChannel>> make_channel_pair() {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
    throw Error(ErrorCode::BackendUnavailable, std::string("socketpair failed: ") + std::strerror(errno));
  }
  return {std::make_unique<FdChannel>(fds[0], fds[0]), std::make_unique<FdChannel>(fds[1], fds[1])};
}

Subprocess Subprocess::spawn(const std::vector<std::string>& argv) {
  if (argv.empty()) throw Error(ErrorCode::BackendUnavailable, "empty backend command");
  ignore_sigpipe_once();
  int to_child[2];
  int from_child[2];
  if (::pipe2(to_child, O_CLOEXEC) != 0) {
    throw Error(ErrorCode::BackendUnavailable, std::string("pipe failed: ") + std::strerror(errno));
  }
  if (::pipe2(from_child, O_CLOEXEC) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw Error(ErrorCode::BackendUnavailable, std::string("pipe failed: ") + std::strerror(errno));
  }
  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);

  const pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) ::close(fd);
    throw Error(ErrorCode::BackendUnavailable, std::string("fork failed: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    ::execvp(args[0], args.data());
    ::_exit(127);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  Subprocess p;
  p.pid_ = pid;
  p.channel_ = std::make_unique<FdChannel>(from_child[0], to_child[1]);
  return p;
}

Subprocess::Subprocess(Subprocess&& o) noexcept : pid_(o.pid_), channel_(std::move(o.channel_)) { o.pid_ = -1; }

Subprocess& Subprocess::operator=(Subprocess&& o) noexcept {
  if (this != &o) {
    terminate();
    pid_ = o.pid_;
    channel_ = std::move(o.channel_);
    o.pid_ = -1;
  }
  return *this;
}

Subprocess::~Subprocess() { terminate(); }

std::unique_ptr<FdChannel> Subprocess::take_channel() { return std::move(channel_); }

int Subprocess::wait() {
  if (pid_ < 0) return -1;
  int status = 0;
  while (::waitpid(pid_, &status, 0) < 0) {
    if (errno != EINTR) {
      pid_ = -1;
      return -1;
    }
  }
  pid_ = -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void Subprocess::terminate() noexcept {
  channel_.reset();
  if (pid_ < 0) return;
  // Give the child a moment to exit on end of stream before signalling.
  for (int i = 0; i < 20; ++i) {
    int status = 0;
    const pid_t r = ::waitpid(pid_, &status, WNOHANG);
    if (r == pid_ || r < 0) {
      pid_ = -1;
      return;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  ::kill(pid_, SIGTERM);
  int status = 0;
  ::waitpid(pid_, &status, 0);
  pid_ = -1;
}

std::vector<std::string> split_command(const std::string& command) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  bool have = false;
  for (const char c : command) {
    if (c == '"') {
      quoted = !quoted;
      have = true;
    } else if (!quoted && (c == ' ' || c == '\t')) {
      if (have) out.push_back(std::move(cur));
      cur.clear();
      have = false;
    } else {
      cur.push_back(c);
      have = true;
    }
  }
  if (have) out.push_back(std::move(cur));
  return out;
}

}  // namespace wardpose
