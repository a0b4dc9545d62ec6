"""
Console output module
Coloured status lines and grid tables for the command line runner
"""

from tabulate import tabulate


class UI:
    """Formats everything the runner prints"""

    # ANSI Color codes for terminal
    COLORS = {
        'HEADER': '\033[95m',
        'BLUE': '\033[94m',
        'CYAN': '\033[96m',
        'GREEN': '\033[92m',
        'YELLOW': '\033[93m',
        'RED': '\033[91m',
        'BOLD': '\033[1m',
        'UNDERLINE': '\033[4m',
        'END': '\033[0m'
    }

    @staticmethod
    def print_header(text):
        """Print a formatted header"""
        print("\n" + "=" * 70)
        print(f"{UI.COLORS['BOLD']}{UI.COLORS['CYAN']}{text.center(70)}{UI.COLORS['END']}")
        print("=" * 70 + "\n")

    @staticmethod
    def print_subheader(text):
        print(f"\n{UI.COLORS['BOLD']}{UI.COLORS['BLUE']}{text}{UI.COLORS['END']}")
        print("-" * len(text))

    @staticmethod
    def print_success(text):
        print(f"{UI.COLORS['GREEN']}✓ {text}{UI.COLORS['END']}")

    @staticmethod
    def print_error(text):
        print(f"{UI.COLORS['RED']}✗ {text}{UI.COLORS['END']}")

    @staticmethod
    def print_warning(text):
        print(f"{UI.COLORS['YELLOW']}! {text}{UI.COLORS['END']}")

    @staticmethod
    def print_info(text):
        print(f"{UI.COLORS['CYAN']}ℹ {text}{UI.COLORS['END']}")

    @staticmethod
    def show_banner(scenario, config, seeds, output_dir):
        """Run banner: scenario, dimensions, seeds and output directory"""
        UI.print_header(f"CP-FBMA SCENARIO: {scenario.upper()}")
        rows = [
            ["System", str(config)],
            ["SNR per user", f"{config.snr_db():.1f} dB"],
            ["Seeds", ", ".join(str(s) for s in seeds)],
            ["Output", output_dir],
        ]
        print(tabulate(rows, tablefmt="grid"))

    @staticmethod
    def display_table(frame, title=None, floatfmt=".4f"):
        """Print a DataFrame as a grid table"""
        if frame is None or frame.empty:
            UI.print_warning("No rows to display.")
            return
        if title:
            UI.print_subheader(title)
        print(tabulate(frame, headers="keys", tablefmt="grid", showindex=False, floatfmt=floatfmt))

    @staticmethod
    def display_manifest(manifest):
        """Output files, timings and failed cells of a finished run"""
        UI.print_subheader(f"Run manifest ({manifest.version})")
        rows = [[path] for path in manifest.outputs]
        print(tabulate(rows, headers=["Output file"], tablefmt="grid"))
        if manifest.wall_times:
            timing = [[cell, f"{seconds:.2f}"] for cell, seconds in manifest.wall_times.items()]
            print(tabulate(timing, headers=["Cell", "Seconds"], tablefmt="grid"))
        for cell in manifest.failed_cells:
            UI.print_error(f"Failed cell: {cell}")
        if manifest.ok:
            UI.print_success(str(manifest))
        else:
            UI.print_warning(str(manifest))

    @staticmethod
    def display_audit(frame):
        """Equivalence audit rows with a coloured pass/fail marker"""
        if frame.empty:
            UI.print_warning("Audit produced no checks.")
            return
        rows = []
        for row in frame.itertuples(index=False):
            mark = (f"{UI.COLORS['GREEN']}PASS{UI.COLORS['END']}" if row.passed
                    else f"{UI.COLORS['RED']}FAIL{UI.COLORS['END']}")
            rows.append([row.seed, row.check, f"{row.abs_error:.2e}", mark])
        print(tabulate(rows, headers=["Seed", "Check", "Abs. error", ""], tablefmt="grid"))
