#include "linleak/cli.hpp"

int main(int argc, char** argv) { return linleak::cli_main(argc, argv); }
