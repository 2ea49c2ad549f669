from .process_results import (
    McReport,
    aggregate_replications,
    emit_table,
    format_table,
    render_markdown,
    write_summary,
)
