#include "bridges/cli.hpp"

int main(int argc, char** argv) { return bridges::cli::run(argc, argv); }
