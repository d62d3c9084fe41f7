// SPDX-License-Identifier: Apache-2.0

#include "leir/process.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "leir/ast.hpp"

namespace leir {

LineProcess::LineProcess(const std::string& command, std::chrono::milliseconds timeout)
    : command_(command), timeout_(timeout) {
    int in[2], out[2];
    if (pipe(in) != 0) throw Error("SpawnFailed", std::string("pipe: ") + std::strerror(errno));
    if (pipe(out) != 0) {
        close(in[0]);
        close(in[1]);
        throw Error("SpawnFailed", std::string("pipe: ") + std::strerror(errno));
    }
    pid_ = fork();
    if (pid_ < 0) throw Error("SpawnFailed", std::string("fork: ") + std::strerror(errno));
    if (pid_ == 0) {
        setpgid(0, 0);
        dup2(in[0], STDIN_FILENO);
        dup2(out[1], STDOUT_FILENO);
        close(in[0]);
        close(in[1]);
        close(out[0]);
        close(out[1]);
        execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    setpgid(pid_, pid_);
    close(in[0]);
    close(out[1]);
    to_child_ = in[1];
    from_child_ = out[0];
    signal(SIGPIPE, SIG_IGN);
}

LineProcess::~LineProcess() {
    if (to_child_ >= 0) close(to_child_);
    if (from_child_ >= 0) close(from_child_);
    if (pid_ > 0) {
        int status = 0;
        // Closed stdin lets well-behaved children exit; stragglers and any
        // processes the shell spawned are killed as a group.
        bool exited = false;
        for (int i = 0; i < 20 && !exited; ++i) {
            exited = waitpid(pid_, &status, WNOHANG) != 0;
            if (!exited) usleep(10000);
        }
        kill(-pid_, SIGKILL);
        if (!exited) waitpid(pid_, &status, 0);
    }
}

std::string LineProcess::request_line(const std::string& line) {
    std::string msg = line + "\n";
    size_t sent = 0;
    while (sent < msg.size()) {
        ssize_t n = write(to_child_, msg.data() + sent, msg.size() - sent);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw Error("ProtocolError", "child '" + command_ + "' closed its input");
        }
        sent += static_cast<size_t>(n);
    }
    auto deadline = std::chrono::steady_clock::now() + timeout_;
    for (;;) {
        auto nl = buffer_.find('\n');
        if (nl != std::string::npos) {
            std::string reply = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            return reply;
        }
        auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) throw Error("Timeout", "no reply from '" + command_ + "'");
        pollfd pfd{from_child_, POLLIN, 0};
        int r = poll(&pfd, 1, static_cast<int>(left.count()));
        if (r < 0 && errno == EINTR) continue;
        if (r == 0) throw Error("Timeout", "no reply from '" + command_ + "'");
        char chunk[4096];
        ssize_t n = read(from_child_, chunk, sizeof chunk);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) throw Error("ProtocolError", "child '" + command_ + "' closed its output");
        buffer_.append(chunk, static_cast<size_t>(n));
    }
}

nlohmann::json LineProcess::request(const nlohmann::json& message) {
    std::string reply = request_line(message.dump());
    try {
        return nlohmann::json::parse(reply);
    } catch (const nlohmann::json::exception& e) {
        throw Error("ProtocolError", "malformed reply line: " + std::string(e.what()));
    }
}

}  // namespace leir
